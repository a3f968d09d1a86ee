//! Equilibrium certification by one-shot deviations.
//!
//! Every profile built by the solver carries the closed-form value of the
//! following stage, so a stage is in equilibrium iff neither player gains by
//! deviating in that stage alone. The one-stage value `Q` is quadratic in the
//! agent's `(κ, ρ)` and depends on the manipulation only through `π` and the
//! signal fraction `w = π²σ²/(π²σ² + δ²)`.
//!
//! With continuation `−Aμ'² − Bσ'² − C`, `K = φ + Aβ²`, `c = Aαβ`,
//! `u = πκμ + ρ` and `D = π²σ² + δ²`:
//!
//! ```text
//! Q = −(θ + Aα²)μ² − (θ + Bα²)σ² − K u² − 2cμu + (B − A)α² w σ²
//!     − Kκ² D − 2cπκσ² − Bω² − C
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::naive_attack_coefficient;
use crate::equilibrium::{
    BehavioralAdversaryStrategy, CoefficientLadder, CoefficientMixture, ContinuationValue, StrategyProfile,
};
use crate::lqg::{feedback_gain, theta_tilde_ladder};
use crate::model::{
    saturating_action, AdversaryAction, AdversaryConstraints, AgentAction, Belief, ModelParams, StageParams,
};
use crate::sim::rollout_stream;

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("stage {0} has no closed-form continuation value to certify against")]
    Unsupported(usize),
    #[error("stage {stage} is outside the horizon {horizon}")]
    StageOutOfRange { stage: usize, horizon: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Adversary,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Falsified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deviation {
    Adversary(AdversaryAction),
    Agent(AgentAction),
    /// One manipulation per stage.
    AttackSequence(Vec<AdversaryAction>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCertificate {
    pub stage: usize,
    pub player: Player,
    pub belief: Belief,
    pub best_deviation: Deviation,
    /// Gain of the best deviation to the deviating player.
    pub improvement: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl DeviationCertificate {
    fn new(
        stage: usize,
        player: Player,
        belief: Belief,
        best: Deviation,
        improvement: f64,
        tol: f64,
    ) -> Self {
        DeviationCertificate {
            stage,
            player,
            belief,
            best_deviation: best,
            improvement,
            tolerance: tol,
            verdict: if improvement <= tol {
                Verdict::Certified
            } else {
                Verdict::Falsified
            },
        }
    }

    pub fn certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Coefficient grid size over `[ε′, ε]`.
    pub pi_points: usize,
    /// Grid points with `|π|` below this are dropped.
    pub zero_notch: f64,
    /// Noise levels as fractions of the saturating variance `π²σ²/(λ − 1)`.
    pub delta2_fractions: Vec<f64>,
    /// Half-width of the agent sanity grid per axis, relative to `1 + |x|`.
    pub agent_span: f64,
    pub agent_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            pi_points: 401,
            zero_notch: 1e-6,
            delta2_fractions: vec![1.0, 0.5, 0.1, 0.0],
            agent_span: 0.5,
            agent_points: 21,
        }
    }
}

impl GridSpec {
    /// Coefficient grid over `[lo, hi]` without the zero notch. Both
    /// endpoints are always included.
    pub fn pi_grid(&self, lo: f64, hi: f64) -> Vec<f64> {
        if lo == hi {
            return if lo.abs() >= self.zero_notch {
                vec![lo]
            } else {
                vec![]
            };
        }
        let n = self.pi_points.max(2);
        (0..n)
            .map(|k| {
                if k == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .filter(|p| p.abs() >= self.zero_notch)
            .collect()
    }
}

/// One-stage value for an arbitrary continuation.
pub fn q_stage(
    p: &StageParams,
    cont: &ContinuationValue,
    b: &Belief,
    adv: &AdversaryAction,
    agent: &AgentAction,
) -> f64 {
    let (a, bb) = (cont.mean_coef, cont.var_coef);
    let (mu, s2) = (b.mu, b.sigma2);
    let a2 = p.alpha * p.alpha;
    let k = p.phi + a * p.beta * p.beta;
    let c = a * p.alpha * p.beta;
    let (kappa, rho, pi) = (agent.kappa, agent.rho, adv.pi);
    let d = pi * pi * s2 + adv.delta2;
    let w = pi * pi * s2 / d;
    let u = pi * kappa * mu + rho;
    -(p.theta + a * a2) * mu * mu - (p.theta + bb * a2) * s2 - k * u * u - 2.0 * c * mu * u
        + (bb - a) * a2 * w * s2
        - k * kappa * kappa * d
        - 2.0 * c * pi * kappa * s2
        - bb * p.omega2
        - cont.constant
}

/// Expected one-stage value when the agent's `(κ, ρ)` meets a mixed
/// manipulation.
pub fn q_mixed(
    p: &StageParams,
    cont: &ContinuationValue,
    b: &Belief,
    g: &BehavioralAdversaryStrategy,
    agent: &AgentAction,
) -> f64 {
    g.support
        .iter()
        .map(|(adv, prob)| prob * q_stage(p, cont, b, adv, agent))
        .sum()
}

fn continuation_at(
    params: &ModelParams,
    ladder: &CoefficientLadder,
    var_coefs: &[f64],
    stage: usize,
) -> ContinuationValue {
    let n = ladder.horizon();
    let constant = (stage + 2..n)
        .map(|j| var_coefs[j] * params.stage(j - 1).omega2)
        .sum();
    ContinuationValue {
        mean_coef: ladder.theta_tilde[stage + 1],
        var_coef: var_coefs[stage + 1],
        constant,
    }
}

/// Pure-regime `Q` at zero-based `stage`, continuing with `θ̃`, `θ̂`.
pub fn q_pure(
    params: &ModelParams,
    ladder: &CoefficientLadder,
    stage: usize,
    b: &Belief,
    adv: &AdversaryAction,
    agent: &AgentAction,
) -> f64 {
    let cont = continuation_at(params, ladder, &ladder.theta_hat, stage);
    q_stage(params.stage(stage), &cont, b, adv, agent)
}

/// Adversary's `Q` against the babbling agent `(0, −gμ)`, continuing with
/// `θ̃`, `θ̌`.
pub fn q_adversary_vs_babbler(
    params: &ModelParams,
    ladder: &CoefficientLadder,
    stage: usize,
    b: &Belief,
    adv: &AdversaryAction,
) -> f64 {
    let p = params.stage(stage);
    let cont = continuation_at(params, ladder, &ladder.theta_check, stage);
    let g = feedback_gain(cont.mean_coef, p);
    q_stage(p, &cont, b, adv, &AgentAction::new(0.0, -g * b.mu))
}

/// Agent's `Q` against a zero-mean saturating mixture, in the closed form
/// that only uses the second moment of the coefficient.
pub fn q_agent_vs_mixture(
    params: &ModelParams,
    ladder: &CoefficientLadder,
    stage: usize,
    b: &Belief,
    g: &BehavioralAdversaryStrategy,
    lambda: f64,
    agent: &AgentAction,
) -> f64 {
    let p = params.stage(stage);
    let cont = continuation_at(params, ladder, &ladder.theta_check, stage);
    let (t, chk) = (cont.mean_coef, cont.var_coef);
    let a2 = p.alpha * p.alpha;
    let k = p.phi + t * p.beta * p.beta;
    let (mu, s2) = (b.mu, b.sigma2);
    let (kappa, rho) = (agent.kappa, agent.rho);
    -(p.theta + t * a2) * mu * mu
        - chk * p.omega2
        - (p.theta + chk * a2 - (chk - t) * a2 * (lambda - 1.0) / lambda) * s2
        - k * g.second_moment_pi() * (mu * mu + lambda / (lambda - 1.0) * s2) * kappa * kappa
        - k * rho * rho
        - 2.0 * t * p.alpha * p.beta * mu * rho
        - cont.constant
}

/// Agent's expected value once `ŝ` and `a` are realized, averaged over the
/// revealed manipulation. Taking the expectation over `ŝ` recovers
/// [`q_mixed`].
pub fn q_realized(
    p: &StageParams,
    cont: &ContinuationValue,
    b: &Belief,
    g: &BehavioralAdversaryStrategy,
    s_hat: f64,
    a: f64,
) -> f64 {
    let (t, bb) = (cont.mean_coef, cont.var_coef);
    let k = p.phi + t * p.beta * p.beta;
    let mut out = -p.theta * (b.mu * b.mu + b.sigma2) - k * a * a - bb * p.omega2 - cont.constant;
    for (adv, prob) in &g.support {
        let d = adv.pi * adv.pi * b.sigma2 + adv.delta2;
        let m = (adv.pi * b.sigma2 * s_hat + b.mu * adv.delta2) / d;
        out -= prob
            * (2.0 * t * m * p.alpha * p.beta * a
                + t * m * m * p.alpha * p.alpha
                + bb * p.alpha * p.alpha * b.sigma2 * adv.delta2 / d);
    }
    out
}

/// Stage-1 value of the two-stage game for a point manipulation. The last
/// stage is worth `−θ₂(μ² + σ²)`.
pub fn q_two_stage(params: &ModelParams, b: &Belief, adv: &AdversaryAction, agent: &AgentAction) -> f64 {
    q_stage(params.stage(0), &two_stage_continuation(params), b, adv, agent)
}

pub fn q_two_stage_mixed(
    params: &ModelParams,
    b: &Belief,
    g: &BehavioralAdversaryStrategy,
    agent: &AgentAction,
) -> f64 {
    q_mixed(params.stage(0), &two_stage_continuation(params), b, g, agent)
}

fn two_stage_continuation(params: &ModelParams) -> ContinuationValue {
    let t2 = params.stage(1).theta;
    ContinuationValue {
        mean_coef: t2,
        var_coef: t2,
        constant: 0.0,
    }
}

/// Two-stage `Q` against a saturating mixture with the optimal `ρ` for the
/// given `κ` substituted; a concave quadratic in `κ`.
pub fn q_two_stage_reduced(
    params: &ModelParams,
    b: &Belief,
    mixture: &CoefficientMixture,
    lambda: f64,
    kappa: f64,
) -> f64 {
    let p = params.stage(0);
    let t2 = params.stage(1).theta;
    let gain = feedback_gain(t2, p);
    let rho = -mixture.mean() * b.mu * kappa - gain * b.mu;
    q_two_stage_mixed(params, b, &mixture.at(b, lambda), &AgentAction::new(kappa, rho))
}

/// Exact best response of the agent to any manipulation mixture.
pub fn agent_best_response(
    p: &StageParams,
    cont: &ContinuationValue,
    b: &Belief,
    g: &BehavioralAdversaryStrategy,
) -> AgentAction {
    let k = p.phi + cont.mean_coef * p.beta * p.beta;
    let gain = cont.mean_coef * p.alpha * p.beta / k;
    let e1 = g.mean_pi();
    let e2 = g.second_moment_pi();
    let ed: f64 = g
        .support
        .iter()
        .map(|(a, prob)| prob * (a.pi * a.pi * b.sigma2 + a.delta2))
        .sum();
    let mu2 = b.mu * b.mu;
    let spread = e2 * mu2 - e1 * e1 * mu2 + ed;
    let kappa = if e1 == 0.0 || gain == 0.0 {
        0.0
    } else {
        -gain * e1 * b.sigma2 / spread
    };
    AgentAction::new(kappa, -e1 * b.mu * kappa - gain * b.mu)
}

#[allow(clippy::too_many_arguments)]
fn agent_certificate(
    stage: usize,
    p: &StageParams,
    cont: &ContinuationValue,
    b: &Belief,
    g: &BehavioralAdversaryStrategy,
    played: &AgentAction,
    grid: &GridSpec,
    tol: f64,
) -> DeviationCertificate {
    let base = q_mixed(p, cont, b, g, played);
    let mut best = agent_best_response(p, cont, b, g);
    let mut best_q = q_mixed(p, cont, b, g, &best);
    let m = grid.agent_points.max(1);
    let half = (m / 2) as f64;
    let (sk, sr) = (
        grid.agent_span * (1.0 + played.kappa.abs()),
        grid.agent_span * (1.0 + played.rho.abs()),
    );
    for i in 0..m {
        for j in 0..m {
            let cand = AgentAction::new(
                played.kappa + sk * (i as f64 - half) / half.max(1.0),
                played.rho + sr * (j as f64 - half) / half.max(1.0),
            );
            let q = q_mixed(p, cont, b, g, &cand);
            if q > best_q {
                best_q = q;
                best = cand;
            }
        }
    }
    DeviationCertificate::new(
        stage,
        Player::Agent,
        *b,
        Deviation::Agent(best),
        best_q - base,
        tol,
    )
}

#[allow(clippy::too_many_arguments)]
fn adversary_certificate(
    stage: usize,
    p: &StageParams,
    cont: &ContinuationValue,
    b: &Belief,
    c: &AdversaryConstraints,
    g: &BehavioralAdversaryStrategy,
    played: &AgentAction,
    grid: &GridSpec,
    tol: f64,
) -> DeviationCertificate {
    let base = q_mixed(p, cont, b, g, played);
    let mut best: Option<(AdversaryAction, f64)> = None;
    let support = g.support.iter().map(|(a, _)| a.pi);
    for pi in grid.pi_grid(c.eps_lo, c.eps_hi).into_iter().chain(support) {
        let sat = saturating_action(pi, b.sigma2, c.lambda);
        for f in &grid.delta2_fractions {
            let cand = AdversaryAction::new(pi, sat.delta2 * f);
            let q = q_stage(p, cont, b, &cand, played);
            // strict comparison keeps the first grid point on ties
            if best.is_none_or(|(_, bq)| q < bq) {
                best = Some((cand, q));
            }
        }
    }
    let (dev, q) = best.expect("coefficient grid is empty");
    DeviationCertificate::new(
        stage,
        Player::Adversary,
        *b,
        Deviation::Adversary(dev),
        base - q,
        tol,
    )
}

/// Certificates for both players at one stage and belief.
pub fn one_shot_deviation_check(
    profile: &StrategyProfile,
    params: &ModelParams,
    c: &AdversaryConstraints,
    stage: usize,
    belief: &Belief,
    grid: &GridSpec,
    tol: f64,
) -> Result<[DeviationCertificate; 2], VerifyError> {
    if stage >= params.horizon {
        return Err(VerifyError::StageOutOfRange {
            stage,
            horizon: params.horizon,
        });
    }
    let rule = profile.rule(stage);
    let cont = rule.continuation.ok_or(VerifyError::Unsupported(stage))?;
    let p = params.stage(stage);
    let g = rule.adversary.resolve(belief, c.lambda);
    let played = rule.agent.action(belief);
    Ok([
        adversary_certificate(stage, p, &cont, belief, c, &g, &played, grid, tol),
        agent_certificate(stage, p, &cont, belief, &g, &played, grid, tol),
    ])
}

/// Checks every stage at the initial-belief mean path and at the beliefs of
/// `extra_beliefs` seeded rollouts.
pub fn certify_profile(
    profile: &StrategyProfile,
    params: &ModelParams,
    c: &AdversaryConstraints,
    grid: &GridSpec,
    tol: f64,
    extra_beliefs: usize,
    seed: u64,
) -> Result<Vec<DeviationCertificate>, VerifyError> {
    let mut beliefs: Vec<Vec<Belief>> = vec![vec![]; params.horizon];
    for (i, b) in crate::sim::expected_belief_path(profile, params)
        .into_iter()
        .enumerate()
    {
        beliefs[i].push(b);
    }
    for k in 0..extra_beliefs {
        let t = rollout_stream(profile, params, seed, k as u64, f64::INFINITY)
            .map_err(|e| VerifyError::Invalid(e.to_string()))?;
        for (i, rec) in t.stages.iter().enumerate() {
            beliefs[i].push(rec.belief);
        }
    }
    let mut out = Vec::new();
    for (stage, bs) in beliefs.iter().enumerate() {
        for b in bs {
            out.extend(one_shot_deviation_check(profile, params, c, stage, b, grid, tol)?);
        }
    }
    Ok(out)
}

/// Largest improvement per player, or `None` if the list is empty.
pub fn worst(certs: &[DeviationCertificate], player: Player) -> Option<&DeviationCertificate> {
    certs
        .iter()
        .filter(|c| c.player == player)
        .max_by(|a, b| a.improvement.total_cmp(&b.improvement))
}

/// Naive agent's expected total reward against a fixed pure attack sequence,
/// by exact propagation of the state's first two moments.
pub fn naive_value_under_attack(params: &ModelParams, attack: &[AdversaryAction]) -> f64 {
    let ladder = theta_tilde_ladder(params);
    let b = params.initial_belief;
    let (mut m, mut v) = (b.mu, b.sigma2);
    let mut total = 0.0;
    for (i, adv) in attack.iter().enumerate().take(params.horizon) {
        let p = params.stage(i);
        let kappa = -feedback_gain(ladder.get(i + 1), p);
        let second = m * m + v;
        total += -p.theta * second - p.phi * kappa * kappa * (adv.pi * adv.pi * second + adv.delta2);
        let f = p.alpha + p.beta * kappa * adv.pi;
        m *= f;
        v = f * f * v + p.beta * p.beta * kappa * kappa * adv.delta2 + p.omega2;
    }
    total
}

fn belief_variance_step(sigma2: f64, adv: &AdversaryAction, p: &StageParams) -> f64 {
    let d = adv.pi * adv.pi * sigma2 + adv.delta2;
    p.alpha * p.alpha * sigma2 * adv.delta2 / d + p.omega2
}

/// Exhaustive search over pure attack sequences against the naive agent.
/// The coefficient grid has step `pi_step` over `[ε′, ε]`; the noise takes
/// each fraction of the saturating variance at the running belief. Stages
/// where the agent does not react are left at the reference attack.
pub fn naive_attack_optimality_check(
    params: &ModelParams,
    c: &AdversaryConstraints,
    grid: &GridSpec,
    pi_step: f64,
    tol: f64,
) -> Result<DeviationCertificate, VerifyError> {
    let pi_ref = naive_attack_coefficient(c).map_err(|e| VerifyError::Invalid(e.to_string()))?;
    let ladder = theta_tilde_ladder(params);
    let n = params.horizon;

    let reference = {
        let mut s2 = params.initial_belief.sigma2;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let adv = saturating_action(pi_ref, s2, c.lambda);
            s2 = belief_variance_step(s2, &adv, params.stage(i));
            out.push(adv);
        }
        out
    };
    let v_ref = naive_value_under_attack(params, &reference);

    let steps = ((c.eps_hi - c.eps_lo) / pi_step).round() as usize;
    let pis: Vec<f64> = (0..=steps)
        .map(|k| c.eps_lo + k as f64 * pi_step)
        .map(|p| if p > c.eps_hi { c.eps_hi } else { p })
        .filter(|p| p.abs() >= grid.zero_notch)
        .collect();
    let active: Vec<bool> = (0..n)
        .map(|i| feedback_gain(ladder.get(i + 1), params.stage(i)) != 0.0)
        .collect();

    let mut best = (reference.clone(), v_ref);
    let mut seq = reference.clone();
    search(
        params,
        c,
        grid,
        &pis,
        &active,
        0,
        params.initial_belief.sigma2,
        &mut seq,
        &mut best,
    );
    let improvement = v_ref - best.1;
    Ok(DeviationCertificate::new(
        0,
        Player::Adversary,
        params.initial_belief,
        Deviation::AttackSequence(best.0),
        improvement,
        tol,
    ))
}

#[allow(clippy::too_many_arguments)]
fn search(
    params: &ModelParams,
    c: &AdversaryConstraints,
    grid: &GridSpec,
    pis: &[f64],
    active: &[bool],
    stage: usize,
    sigma2: f64,
    seq: &mut Vec<AdversaryAction>,
    best: &mut (Vec<AdversaryAction>, f64),
) {
    if stage == params.horizon {
        let v = naive_value_under_attack(params, seq);
        if v < best.1 {
            *best = (seq.clone(), v);
        }
        return;
    }
    let p = params.stage(stage);
    if !active[stage] {
        let adv = seq[stage];
        let adv = saturating_action(adv.pi, sigma2, c.lambda);
        seq[stage] = adv;
        search(
            params,
            c,
            grid,
            pis,
            active,
            stage + 1,
            belief_variance_step(sigma2, &adv, p),
            seq,
            best,
        );
        return;
    }
    for &pi in pis {
        let sat = saturating_action(pi, sigma2, c.lambda).delta2;
        for f in &grid.delta2_fractions {
            let adv = AdversaryAction::new(pi, sat * f);
            seq[stage] = adv;
            search(
                params,
                c,
                grid,
                pis,
                active,
                stage + 1,
                belief_variance_step(sigma2, &adv, p),
                seq,
                best,
            );
        }
    }
}

/// Stage-1 values at the two bounds of the two-stage equilibrium, under the
/// equilibrium agent action.
pub fn two_stage_indifference(
    params: &ModelParams,
    c: &AdversaryConstraints,
    profile: &StrategyProfile,
) -> (f64, f64) {
    let b = params.initial_belief;
    let agent = profile.rule(0).agent.action(&b);
    let lo = saturating_action(c.eps_lo, b.sigma2, c.lambda);
    let hi = saturating_action(c.eps_hi, b.sigma2, c.lambda);
    (
        q_two_stage(params, &b, &lo, &agent),
        q_two_stage(params, &b, &hi, &agent),
    )
}
