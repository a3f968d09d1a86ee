//! Seeded Monte Carlo rollouts of a strategy profile.
//!
//! Rollout `k` draws from a ChaCha8 stream keyed on `(seed, k)`, so results
//! do not depend on scheduling. Rollouts run in fixed-size chunks on the
//! rayon pool and the chunk statistics are merged in chunk order, which keeps
//! every reported number bitwise reproducible for any thread count.
//!
//! Gaussian draws use the Box–Muller transform (cosine branch only).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::StrategyProfile;
use crate::lqg::belief_update;
use crate::model::{
    stage_reward, step_dynamics, AdversaryConstraints, Belief, ModelParams, StageRecord, Trajectory,
    DEFAULT_DIVERGENCE_THRESHOLD,
};

const CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("all {rollouts} rollouts diverged")]
    AllDiverged { rollouts: usize, diverged: usize },
    #[error("profile has {stages} stage rules but the horizon is {horizon}")]
    HorizonMismatch { stages: usize, horizon: usize },
    #[error("invalid simulation config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rollouts: usize,
    pub seed: u64,
    pub divergence_threshold: f64,
    /// Number of final stages averaged for the steady-state estimate.
    pub steady_state_window: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rollouts: 10_000,
            seed: 0,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            steady_state_window: 100,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.rollouts < 1 {
            return Err(SimError::Invalid("rollouts must be at least 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(SimError::Invalid("divergence_threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub rollouts: usize,
    pub seed: u64,
    pub mean_total_reward: f64,
    pub stderr: f64,
    /// False when fewer than two rollouts survived; `stderr` is then 0.
    pub stderr_valid: bool,
    /// `mean_total_reward / N`.
    pub mean_per_stage_reward: f64,
    pub per_stage_means: Vec<f64>,
    pub diverged_count: usize,
    /// Mean over rollouts of the per-stage reward averaged over the last
    /// `window_len` stages.
    pub window_mean: f64,
    pub window_stderr: f64,
    pub window_len: usize,
}

/// Standard normal draw by Box–Muller.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 − u lies in (0, 1], so the logarithm is finite
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Random stream for rollout `index` under `seed`.
pub fn rollout_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_horizon(profile: &StrategyProfile, params: &ModelParams) -> Result<(), SimError> {
    if profile.supports_horizon(params.horizon) {
        Ok(())
    } else {
        Err(SimError::HorizonMismatch {
            stages: profile.stages.len(),
            horizon: params.horizon,
        })
    }
}

/// Plays one game, calling `visit` after every completed stage. Returns true
/// if the state left the divergence bound, in which case play stops early.
fn play<R: Rng>(
    profile: &StrategyProfile,
    params: &ModelParams,
    threshold: f64,
    rng: &mut R,
    mut visit: impl FnMut(usize, &StageRecord),
) -> bool {
    let mut belief = params.initial_belief;
    let mut s = belief.mu + belief.sigma2.sqrt() * standard_normal(rng);
    for i in 0..params.horizon {
        if !s.is_finite() || s.abs() > threshold {
            return true;
        }
        let p = params.stage(i);
        let rule = profile.rule(i);
        let g = rule.adversary.resolve(&belief, profile.lambda);
        let channel = if g.support.len() == 1 {
            g.support[0].0
        } else {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = g.support[g.support.len() - 1].0;
            for (a, prob) in &g.support {
                acc += prob;
                if u < acc {
                    pick = *a;
                    break;
                }
            }
            pick
        };
        let control = rule.agent.action(&belief);
        let s_hat = channel.pi * s + channel.delta2.sqrt() * standard_normal(rng);
        let a = control.act(s_hat);
        let r = stage_reward(s, a, p);
        visit(
            i,
            &StageRecord {
                belief,
                manipulation: channel,
                control,
                s,
                s_hat,
                a,
                r,
            },
        );
        belief = belief_update(&belief, &channel, s_hat, a, p);
        s = step_dynamics(s, a, p.omega2.sqrt() * standard_normal(rng), p);
    }
    !s.is_finite() || s.abs() > threshold
}

/// One seeded game. The trajectory is truncated at divergence.
pub fn rollout(
    profile: &StrategyProfile,
    params: &ModelParams,
    seed: u64,
    divergence_threshold: f64,
) -> Result<Trajectory, SimError> {
    rollout_stream(profile, params, seed, 0, divergence_threshold)
}

/// Rollout `index` of the family keyed on `seed`, as used by
/// [`monte_carlo_value`].
pub fn rollout_stream(
    profile: &StrategyProfile,
    params: &ModelParams,
    seed: u64,
    index: u64,
    divergence_threshold: f64,
) -> Result<Trajectory, SimError> {
    check_horizon(profile, params)?;
    let mut rng = rollout_rng(seed, index);
    let mut stages = Vec::with_capacity(params.horizon);
    let diverged = play(profile, params, divergence_threshold, &mut rng, |_, rec| {
        stages.push(*rec)
    });
    let total_reward = stages.iter().map(|r| r.r).sum();
    Ok(Trajectory {
        stages,
        total_reward,
        diverged,
    })
}

/// Running mean and sum of squared deviations, merged with Chan's formula.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            (self.m2 / (self.n - 1.0) / self.n).sqrt()
        }
    }
}

#[derive(Debug, Clone)]
struct Acc {
    total: Moments,
    window: Moments,
    per_stage: Vec<Moments>,
    diverged: usize,
}

impl Acc {
    fn new(horizon: usize) -> Self {
        Acc {
            total: Moments::default(),
            window: Moments::default(),
            per_stage: vec![Moments::default(); horizon],
            diverged: 0,
        }
    }

    fn merge(&mut self, o: &Acc) {
        self.total.merge(&o.total);
        self.window.merge(&o.window);
        for (a, b) in self.per_stage.iter_mut().zip(&o.per_stage) {
            a.merge(b);
        }
        self.diverged += o.diverged;
    }
}

pub fn monte_carlo_value(
    profile: &StrategyProfile,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    cfg.validate()?;
    check_horizon(profile, params)?;
    let n = params.horizon;
    let window_len = cfg.steady_state_window.clamp(1, n);
    let window_start = n - window_len;
    let chunks = cfg.rollouts.div_ceil(CHUNK);
    let partials: Vec<Acc> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Acc::new(n);
            let mut rewards = vec![0.0; n];
            let end = ((c + 1) * CHUNK).min(cfg.rollouts);
            for k in c * CHUNK..end {
                let mut rng = rollout_rng(cfg.seed, k as u64);
                let diverged = play(profile, params, cfg.divergence_threshold, &mut rng, |i, rec| {
                    rewards[i] = rec.r
                });
                if diverged {
                    acc.diverged += 1;
                    continue;
                }
                acc.total.push(rewards.iter().sum());
                acc.window
                    .push(rewards[window_start..].iter().sum::<f64>() / window_len as f64);
                for (m, r) in acc.per_stage.iter_mut().zip(&rewards) {
                    m.push(*r);
                }
            }
            acc
        })
        .collect();
    let mut acc = Acc::new(n);
    for p in &partials {
        acc.merge(p);
    }
    if acc.total.n == 0.0 {
        return Err(SimError::AllDiverged {
            rollouts: cfg.rollouts,
            diverged: acc.diverged,
        });
    }
    Ok(SimResult {
        rollouts: cfg.rollouts,
        seed: cfg.seed,
        mean_total_reward: acc.total.mean,
        stderr: acc.total.stderr(),
        stderr_valid: acc.total.n >= 2.0,
        mean_per_stage_reward: acc.total.mean / n as f64,
        per_stage_means: acc.per_stage.iter().map(|m| m.mean).collect(),
        diverged_count: acc.diverged,
        window_mean: acc.window.mean,
        window_stderr: acc.window.stderr(),
        window_len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Lambda,
    /// Symmetric bounds `[−v, v]`.
    Eps,
}

impl SweepVariable {
    pub fn apply(self, base: &AdversaryConstraints, v: f64) -> AdversaryConstraints {
        match self {
            SweepVariable::Lambda => AdversaryConstraints { lambda: v, ..*base },
            SweepVariable::Eps => AdversaryConstraints {
                eps_lo: -v,
                eps_hi: v,
                ..*base
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub constraints: AdversaryConstraints,
    pub closed_form: Option<f64>,
    pub result: Result<SimResult, String>,
}

/// A profile to simulate at one grid point, plus its closed-form value when
/// one is known.
pub type SweepPoint = (StrategyProfile, Option<f64>);

/// Simulates one profile per grid point. A failing row records its error and
/// the sweep moves on.
pub fn sweep<F>(
    params: &ModelParams,
    base: &AdversaryConstraints,
    variable: SweepVariable,
    grid: &[f64],
    cfg: &SimConfig,
    factory: F,
) -> Vec<SweepRow>
where
    F: Fn(&AdversaryConstraints) -> Result<SweepPoint, String>,
{
    grid.iter()
        .map(|&value| {
            let constraints = variable.apply(base, value);
            let (closed_form, result) = match factory(&constraints) {
                Ok((profile, cf)) => (
                    cf,
                    monte_carlo_value(&profile, params, cfg).map_err(|e| e.to_string()),
                ),
                Err(e) => (None, Err(e)),
            };
            SweepRow {
                value,
                constraints,
                closed_form,
                result,
            }
        })
        .collect()
}

/// Closed-form common belief path when the observation noise does not depend
/// on the realized state: the variance is deterministic and the mean follows
/// the expected dynamics.
pub fn expected_belief_path(profile: &StrategyProfile, params: &ModelParams) -> Vec<Belief> {
    let mut out = Vec::with_capacity(params.horizon);
    let mut b = params.initial_belief;
    for i in 0..params.horizon {
        out.push(b);
        let p = params.stage(i);
        let rule = profile.rule(i);
        let g = rule.adversary.resolve(&b, profile.lambda);
        let (channel, _) = g.support[0];
        let a = rule.agent.action(&b).act(channel.pi * b.mu);
        b = belief_update(&b, &channel, channel.pi * b.mu, a, p);
    }
    out
}
