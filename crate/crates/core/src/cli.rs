//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input, 2 regime without a constructed
//! equilibrium, 3 falsified certificate or every rollout diverged.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{alert_stationary_profile, naive_finite_profile, naive_stationary_profile};
use crate::equilibrium::{solve, RegimeClass, StrategyProfile, SupportSpec};
use crate::model::{
    constraint_violations, validate, AdversaryConstraints, Belief, ModelParams, StageParams, StageSchedule,
    DEFAULT_DIVERGENCE_THRESHOLD,
};
use crate::sim::{monte_carlo_value, sweep, SimConfig, SimError, SimResult, SweepVariable};
use crate::stationary::{
    asymptotic_avg_reward, iterate_sequence, kleene_iterate, stationary_behavioral_profile,
    stationary_pure_profile, FixedPointMap, StationaryRegime, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::verify::{certify_profile, two_stage_indifference, GridSpec, Player};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("{0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Io(_) => 1,
            CliError::Unsupported(_) => 2,
            CliError::Failed(_) => 3,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub time_invariant: Option<StageParams>,
    pub stages: Option<Vec<StageParams>>,
    pub horizon: usize,
    pub mu1: f64,
    pub sigma1_sq: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            time_invariant: Some(StageParams::TABLE1),
            stages: None,
            horizon: 2,
            mu1: 0.0,
            sigma1_sq: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryBlock {
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub lambda: f64,
}

impl Default for AdversaryBlock {
    fn default() -> Self {
        AdversaryBlock {
            eps_lo: 1.0,
            eps_hi: 1.0,
            lambda: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimBlock {
    pub rollouts: usize,
    pub seed: u64,
    pub divergence_threshold: f64,
}

impl Default for SimBlock {
    fn default() -> Self {
        SimBlock {
            rollouts: 10_000,
            seed: 0,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl SweepBlock {
    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        (0..self.points)
            .map(|k| self.start + (self.stop - self.start) * k as f64 / (self.points - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub adversary: AdversaryBlock,
    pub sim: SimBlock,
    pub sweep: Option<SweepBlock>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Invalid(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn model_params(&self) -> CliResult<ModelParams> {
        let m = &self.model;
        let belief = Belief::new(m.mu1, m.sigma1_sq);
        let schedule = match (&m.time_invariant, &m.stages) {
            (Some(p), None) => StageSchedule::TimeInvariant(*p),
            (None, Some(s)) => StageSchedule::PerStage(s.clone()),
            (Some(_), Some(_)) => {
                return Err(CliError::Invalid(
                    "model: give either time_invariant or stages, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Invalid(
                    "model: time_invariant or stages is required".into(),
                ))
            }
        };
        Ok(ModelParams {
            schedule,
            horizon: m.horizon,
            initial_belief: belief,
        })
    }

    pub fn constraints(&self) -> AdversaryConstraints {
        let a = &self.adversary;
        AdversaryConstraints::new(a.eps_lo, a.eps_hi, a.lambda)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            rollouts: self.sim.rollouts,
            seed: self.sim.seed,
            divergence_threshold: self.sim.divergence_threshold,
            ..SimConfig::default()
        }
    }

    /// Every violated invariant, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = match self.model_params() {
            Ok(params) => validate(&params, &self.constraints()).violations,
            Err(e) => {
                let mut v = vec![e.to_string()];
                v.extend(constraint_violations(&self.constraints()));
                v
            }
        };
        if self.sim.rollouts < 1 {
            v.push("sim.rollouts must be at least 1".into());
        }
        if !(self.sim.divergence_threshold > 0.0) {
            v.push("sim.divergence_threshold must be positive".into());
        }
        if let Some(s) = &self.sweep {
            if s.points < 1 {
                v.push("sweep.points must be at least 1".into());
            } else if s.points > 1 && !(s.start < s.stop) {
                v.push("sweep grid must be strictly increasing (start < stop)".into());
            }
        }
        v
    }

    pub fn validated(&self) -> CliResult<(ModelParams, AdversaryConstraints)> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(CliError::Invalid(v.join("; ")));
        }
        Ok((self.model_params()?, self.constraints()))
    }
}

// ---------------------------------------------------------------- args

#[derive(Debug, Parser)]
#[command(
    name = "alqg",
    version,
    about = "Adversarial LQG cheap-talk game: solve, simulate, verify"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; built-in defaults otherwise.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub rollouts: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long = "eps-lo", global = true, allow_hyphen_values = true)]
    pub eps_lo: Option<f64>,
    #[arg(long = "eps-hi", global = true, allow_hyphen_values = true)]
    pub eps_hi: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long = "dump-config", global = true)]
    pub dump_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    /// Stationary equilibrium for a time-invariant model when one exists,
    /// the finite-horizon equilibrium otherwise.
    Spe,
    /// Finite-horizon equilibrium.
    SpeFinite,
    Naive,
    Alert,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the game and build its equilibrium.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Least fixed points of the stationary coefficient maps.
    Stationary {
        #[command(flatten)]
        common: Common,
        /// Include the iterate sequences of both maps.
        #[arg(long)]
        trace: bool,
    },
    /// Monte Carlo evaluation of a profile.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "spe")]
        profile: ProfileKind,
        /// Assumed coefficient of the alert agent (default: eps_hi).
        #[arg(long = "pi-hat", allow_hyphen_values = true)]
        pi_hat: Option<f64>,
    },
    /// One-shot deviation certificates for the equilibrium profile.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Scale agent gains by 1 + f and shift the first support
        /// probability by f before certifying.
        #[arg(long, allow_hyphen_values = true)]
        perturb: Option<f64>,
        /// Rollout beliefs checked per stage besides the mean path.
        #[arg(long, default_value_t = 10)]
        beliefs: usize,
    },
    /// Write the CSV data behind a figure.
    ///
    /// fig3: lambda grid from the sweep block, default 50 points on [1.1, 10].
    /// fig4: 40 iterates of both maps at lambda 1.5 and 2.
    /// fig5: lambda in {1.5, 2}, symmetric eps from the sweep block, default
    /// {0.5, 1, ..., 3}; horizon 200 unless --horizon is given, steady state
    /// over the last 100 stages.
    Reproduce {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["3", "4", "5"])]
        fig: String,
        /// fig4 iteration count.
        #[arg(long, default_value_t = 40)]
        iterations: usize,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve { common }
            | Command::Stationary { common, .. }
            | Command::Simulate { common, .. }
            | Command::Verify { common, .. }
            | Command::Reproduce { common, .. } => common,
        }
    }
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_json(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.sim.seed = s;
    }
    if let Some(r) = common.rollouts {
        cfg.sim.rollouts = r;
    }
    if let Some(l) = common.lambda {
        cfg.adversary.lambda = l;
    }
    if let Some(e) = common.eps_lo {
        cfg.adversary.eps_lo = e;
    }
    if let Some(e) = common.eps_hi {
        cfg.adversary.eps_hi = e;
    }
    if let Some(h) = common.horizon {
        cfg.model.horizon = h;
    }
    if let Some(o) = &common.out {
        cfg.output = Some(o.clone());
    }
    Ok(cfg)
}

// ---------------------------------------------------------------- output

/// Rounds to 12 significant digits and prints the shortest form.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("float round trip");
    format!("{rounded}")
}

fn csv_bytes(seed: u64, header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut out = format!("# seed={seed}, version={VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| CliError::Failed(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(out)
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    s.push('\n');
    emit(path, s.as_bytes())
}

// ---------------------------------------------------------------- commands

pub fn cmd_solve(cfg: &RunConfig) -> CliResult<()> {
    let (params, c) = cfg.validated()?;
    let report = solve(&params, &c, &SupportSpec::Extremes).map_err(|e| CliError::Invalid(e.to_string()))?;
    if report.profile.is_none() {
        eprintln!(
            "regime {:?}: no equilibrium constructed ({})",
            report.regime,
            report.note.as_deref().unwrap_or("")
        );
    } else if let Some(v) = report.value {
        eprintln!("regime {:?}: V1 = {}", report.regime, fmt_num(v));
    }
    emit_json(cfg.output.as_deref(), &report)
}

#[derive(Debug, Serialize)]
struct StationaryOutput {
    lambda: f64,
    theta_tilde: f64,
    theta_hat: f64,
    theta_check: f64,
    avg_reward_pure: f64,
    avg_reward_behavioral: f64,
    iterations_l: usize,
    iterations_j: usize,
    profile: Option<StrategyProfile>,
    trace_l: Option<Vec<(f64, f64)>>,
    trace_j: Option<Vec<(f64, f64)>>,
}

fn time_invariant_stage(params: &ModelParams) -> CliResult<StageParams> {
    match &params.schedule {
        StageSchedule::TimeInvariant(p) => Ok(*p),
        StageSchedule::PerStage(_) => Err(CliError::Unsupported(
            "stationary analysis needs a time-invariant model".into(),
        )),
    }
}

pub fn cmd_stationary(cfg: &RunConfig, trace: bool) -> CliResult<()> {
    let mut v = cfg.violations();
    if let Some(p) = &cfg.model.time_invariant {
        let a2 = p.alpha * p.alpha;
        if !(cfg.adversary.lambda > a2) {
            v.push(format!(
                "stationary analysis needs lambda > alpha^2 (lambda = {}, alpha^2 = {a2})",
                cfg.adversary.lambda
            ));
        }
    }
    if !v.is_empty() {
        return Err(CliError::Invalid(v.join("; ")));
    }
    let (params, c) = cfg.validated()?;
    let p = time_invariant_stage(&params)?;
    let l = kleene_iterate(
        FixedPointMap::L,
        &p,
        c.lambda,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
        trace,
    );
    let j = kleene_iterate(
        FixedPointMap::J,
        &p,
        c.lambda,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
        trace,
    );
    if !(l.converged && j.converged) {
        return Err(CliError::Failed("fixed-point iteration did not converge".into()));
    }
    let profile = if c.eps_lo == c.eps_hi && c.eps_hi != 0.0 {
        stationary_pure_profile(&p, &c).ok()
    } else if c.eps_lo < 0.0 && c.eps_hi > 0.0 {
        stationary_behavioral_profile(&p, &c).ok()
    } else {
        None
    };
    let out = StationaryOutput {
        lambda: c.lambda,
        theta_tilde: l.theta_tilde,
        theta_hat: l.theta_companion,
        theta_check: j.theta_companion,
        avg_reward_pure: -l.theta_companion * p.omega2,
        avg_reward_behavioral: -j.theta_companion * p.omega2,
        iterations_l: l.iterations,
        iterations_j: j.iterations,
        profile,
        trace_l: l.trace,
        trace_j: j.trace,
    };
    emit_json(cfg.output.as_deref(), &out)
}

/// Profile to simulate and its closed-form total (finite) or per-stage
/// (stationary) value.
fn build_profile(
    kind: ProfileKind,
    params: &ModelParams,
    c: &AdversaryConstraints,
    pi_hat: Option<f64>,
) -> CliResult<(StrategyProfile, Option<f64>)> {
    let stage = match &params.schedule {
        StageSchedule::TimeInvariant(p) => Some(*p),
        StageSchedule::PerStage(_) => None,
    };
    let unsupported = |e: String| CliError::Unsupported(e);
    match kind {
        ProfileKind::Spe => {
            if let Some(p) = stage {
                if c.eps_lo == c.eps_hi && c.eps_hi != 0.0 {
                    let prof = stationary_pure_profile(&p, c).map_err(|e| unsupported(e.to_string()))?;
                    let v = asymptotic_avg_reward(StationaryRegime::Pure, &p, c.lambda).ok();
                    return Ok((prof, v));
                }
                if c.eps_lo < 0.0 && c.eps_hi > 0.0 {
                    let prof =
                        stationary_behavioral_profile(&p, c).map_err(|e| unsupported(e.to_string()))?;
                    let v = asymptotic_avg_reward(StationaryRegime::Behavioral, &p, c.lambda).ok();
                    return Ok((prof, v));
                }
            }
            build_profile(ProfileKind::SpeFinite, params, c, pi_hat)
        }
        ProfileKind::SpeFinite => {
            let report =
                solve(params, c, &SupportSpec::Extremes).map_err(|e| CliError::Invalid(e.to_string()))?;
            match report.profile {
                Some(p) => Ok((p, report.value)),
                None => Err(unsupported(format!(
                    "regime {:?}: no equilibrium constructed",
                    report.regime
                ))),
            }
        }
        ProfileKind::Naive => {
            let prof = match stage {
                Some(p) => naive_stationary_profile(&p, c),
                None => naive_finite_profile(params, c),
            };
            Ok((prof.map_err(|e| unsupported(e.to_string()))?, None))
        }
        ProfileKind::Alert => {
            let p = stage.ok_or_else(|| unsupported("alert agent needs a time-invariant model".into()))?;
            let prof = alert_stationary_profile(&p, c, pi_hat.unwrap_or(c.eps_hi))
                .map_err(|e| unsupported(e.to_string()))?;
            Ok((prof, None))
        }
    }
}

fn sim_failure(e: SimError) -> CliError {
    match e {
        SimError::AllDiverged { .. } => CliError::Failed(e.to_string()),
        _ => CliError::Invalid(e.to_string()),
    }
}

pub fn cmd_simulate(cfg: &RunConfig, kind: ProfileKind, pi_hat: Option<f64>) -> CliResult<()> {
    let (params, c) = cfg.validated()?;
    let (profile, closed_form) = build_profile(kind, &params, &c, pi_hat)?;
    let sc = cfg.sim_config();
    let r = monte_carlo_value(&profile, &params, &sc).map_err(sim_failure)?;
    let header = [
        "profile",
        "lambda",
        "eps_lo",
        "eps_hi",
        "horizon",
        "rollouts",
        "seed",
        "mean_total_reward",
        "stderr",
        "mean_per_stage_reward",
        "window_mean",
        "window_stderr",
        "window_len",
        "diverged_count",
        "closed_form",
    ];
    let row = vec![
        format!("{kind:?}").to_lowercase(),
        fmt_num(c.lambda),
        fmt_num(c.eps_lo),
        fmt_num(c.eps_hi),
        params.horizon.to_string(),
        r.rollouts.to_string(),
        r.seed.to_string(),
        fmt_num(r.mean_total_reward),
        fmt_num(r.stderr),
        fmt_num(r.mean_per_stage_reward),
        fmt_num(r.window_mean),
        fmt_num(r.window_stderr),
        r.window_len.to_string(),
        r.diverged_count.to_string(),
        closed_form.map(fmt_num).unwrap_or_default(),
    ];
    let bytes = csv_bytes(sc.seed, &header, &[row])?;
    emit(cfg.output.as_deref(), &bytes)
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    regime: RegimeClass,
    all_certified: bool,
    max_adversary_improvement: f64,
    max_agent_improvement: f64,
    indifference: Option<(f64, f64)>,
    certificates: Vec<crate::verify::DeviationCertificate>,
}

pub fn cmd_verify(cfg: &RunConfig, perturb: Option<f64>, beliefs: usize) -> CliResult<()> {
    let (params, c) = cfg.validated()?;
    let report = solve(&params, &c, &SupportSpec::Extremes).map_err(|e| CliError::Invalid(e.to_string()))?;
    let Some(mut profile) = report.profile else {
        return Err(CliError::Unsupported(format!(
            "regime {:?}: no equilibrium constructed",
            report.regime
        )));
    };
    if let Some(f) = perturb {
        profile = profile.perturbed(1.0 + f, f);
    }
    let certs = certify_profile(
        &profile,
        &params,
        &c,
        &GridSpec::default(),
        crate::verify::DEFAULT_TOL,
        beliefs,
        cfg.sim.seed,
    )
    .map_err(|e| CliError::Unsupported(e.to_string()))?;
    let max_of = |pl: Player| {
        certs
            .iter()
            .filter(|x| x.player == pl)
            .map(|x| x.improvement)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let indifference =
        (report.regime == RegimeClass::TwoStageUnique).then(|| two_stage_indifference(&params, &c, &profile));
    let out = VerifyOutput {
        regime: report.regime,
        all_certified: certs.iter().all(|x| x.certified()),
        max_adversary_improvement: max_of(Player::Adversary),
        max_agent_improvement: max_of(Player::Agent),
        indifference,
        certificates: certs,
    };
    emit_json(cfg.output.as_deref(), &out)?;
    if !out.all_certified {
        let worst = out
            .certificates
            .iter()
            .max_by(|a, b| a.improvement.total_cmp(&b.improvement))
            .expect("nonempty");
        return Err(CliError::Failed(format!(
            "falsified: {:?} at stage {} gains {} with {:?}",
            worst.player,
            worst.stage + 1,
            fmt_num(worst.improvement),
            worst.best_deviation
        )));
    }
    Ok(())
}

pub const FIG3_HEADER: [&str; 3] = ["lambda", "avg_reward_pure", "avg_reward_behavioral"];
pub const FIG4_HEADER: [&str; 6] = [
    "n",
    "theta_tilde_L",
    "theta_hat_L",
    "theta_tilde_J",
    "theta_check_J",
    "lambda",
];
pub const FIG5_HEADER: [&str; 8] = [
    "lambda",
    "eps",
    "reward_spe",
    "reward_naive_mean",
    "reward_naive_stderr",
    "reward_alert_mean",
    "reward_alert_stderr",
    "naive_diverged",
];
pub const FIG4_LAMBDAS: [f64; 2] = [1.5, 2.0];
pub const FIG5_LAMBDAS: [f64; 2] = [1.5, 2.0];
pub const FIG5_HORIZON: usize = 200;

fn sweep_grid(cfg: &RunConfig, variable: SweepVariable, default: SweepBlock) -> Vec<f64> {
    match &cfg.sweep {
        Some(s) if s.variable == variable => s.grid(),
        _ => default.grid(),
    }
}

pub fn fig3_rows(cfg: &RunConfig, p: &StageParams) -> CliResult<Vec<Vec<String>>> {
    let grid = sweep_grid(
        cfg,
        SweepVariable::Lambda,
        SweepBlock {
            variable: SweepVariable::Lambda,
            start: 1.1,
            stop: 10.0,
            points: 50,
        },
    );
    grid.iter()
        .map(|&lambda| {
            let pure = asymptotic_avg_reward(StationaryRegime::Pure, p, lambda);
            let beh = asymptotic_avg_reward(StationaryRegime::Behavioral, p, lambda);
            match (pure, beh) {
                (Ok(a), Ok(b)) => Ok(vec![fmt_num(lambda), fmt_num(a), fmt_num(b)]),
                (Err(e), _) | (_, Err(e)) => Err(CliError::Invalid(e.to_string())),
            }
        })
        .collect()
}

pub fn fig4_rows(p: &StageParams, iterations: usize) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for lambda in FIG4_LAMBDAS {
        let l = iterate_sequence(FixedPointMap::L, p, lambda, iterations);
        let j = iterate_sequence(FixedPointMap::J, p, lambda, iterations);
        for (n, ((xl, yl), (xj, yj))) in l.iter().zip(&j).enumerate() {
            rows.push(vec![
                n.to_string(),
                fmt_num(*xl),
                fmt_num(*yl),
                fmt_num(*xj),
                fmt_num(*yj),
                fmt_num(lambda),
            ]);
        }
    }
    rows
}

fn mean_cells(r: &Result<SimResult, String>) -> (String, String) {
    match r {
        Ok(s) => (fmt_num(s.window_mean), fmt_num(s.window_stderr)),
        Err(_) => ("NaN".into(), "NaN".into()),
    }
}

pub fn fig5_rows(cfg: &RunConfig, p: &StageParams) -> CliResult<Vec<Vec<String>>> {
    let grid = sweep_grid(
        cfg,
        SweepVariable::Eps,
        SweepBlock {
            variable: SweepVariable::Eps,
            start: 0.5,
            stop: 3.0,
            points: 6,
        },
    );
    let horizon = if cfg.model.horizon > 2 {
        cfg.model.horizon
    } else {
        FIG5_HORIZON
    };
    let params = ModelParams::time_invariant(*p, horizon, Belief::new(cfg.model.mu1, cfg.model.sigma1_sq));
    let sc = cfg.sim_config();
    let mut rows = Vec::new();
    for lambda in FIG5_LAMBDAS {
        let base = AdversaryConstraints::new(-1.0, 1.0, lambda);
        let spe = asymptotic_avg_reward(StationaryRegime::Behavioral, p, lambda)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        let naive = sweep(&params, &base, SweepVariable::Eps, &grid, &sc, |c| {
            naive_stationary_profile(p, c)
                .map(|prof| (prof, None))
                .map_err(|e| e.to_string())
        });
        let alert = sweep(&params, &base, SweepVariable::Eps, &grid, &sc, |c| {
            alert_stationary_profile(p, c, c.eps_hi)
                .map(|prof| (prof, None))
                .map_err(|e| e.to_string())
        });
        for (n, a) in naive.iter().zip(&alert) {
            let (nm, ns) = mean_cells(&n.result);
            let (am, as_) = mean_cells(&a.result);
            let diverged = match &n.result {
                Ok(s) => s.diverged_count,
                Err(_) => sc.rollouts,
            };
            rows.push(vec![
                fmt_num(lambda),
                fmt_num(n.value),
                fmt_num(spe),
                nm,
                ns,
                am,
                as_,
                diverged.to_string(),
            ]);
        }
    }
    Ok(rows)
}

pub fn cmd_reproduce(cfg: &RunConfig, fig: &str, iterations: usize) -> CliResult<()> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(CliError::Invalid(v.join("; ")));
    }
    let p = cfg
        .model
        .time_invariant
        .ok_or_else(|| CliError::Unsupported("figures need a time-invariant model".into()))?;
    let (header, rows): (&[&str], _) = match fig {
        "3" => (&FIG3_HEADER, fig3_rows(cfg, &p)?),
        "4" => (&FIG4_HEADER, fig4_rows(&p, iterations)),
        "5" => (&FIG5_HEADER, fig5_rows(cfg, &p)?),
        other => return Err(CliError::Invalid(format!("unknown figure {other}"))),
    };
    let bytes = csv_bytes(cfg.sim.seed, header, &rows)?;
    let path = cfg
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("fig{fig}.csv")));
    emit(Some(&path), &bytes)
}

fn configure_threads() {
    if let Some(n) = std::env::var("ALQG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // a second initialization attempt only fails harmlessly
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    configure_threads();
    let common = cli.command.common().clone();
    let cfg = load_config(&common)?;
    if common.dump_config {
        let mut s = cfg.to_json();
        s.push('\n');
        return emit(common.out.as_deref(), s.as_bytes());
    }
    match &cli.command {
        Command::Solve { .. } => cmd_solve(&cfg),
        Command::Stationary { trace, .. } => cmd_stationary(&cfg, *trace),
        Command::Simulate { profile, pi_hat, .. } => cmd_simulate(&cfg, *profile, *pi_hat),
        Command::Verify { perturb, beliefs, .. } => cmd_verify(&cfg, *perturb, *beliefs),
        Command::Reproduce { fig, iterations, .. } => cmd_reproduce(&cfg, fig, *iterations),
    }
}

/// Parses arguments, runs, reports errors on stderr and returns the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
