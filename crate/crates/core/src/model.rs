//! Primitives of the adversarial LQG game: scalar linear dynamics, quadratic
//! rewards, and the feasible set of observation manipulations.
//!
//! The true state evolves as `s' = α s + β a + z` with `z ~ N(0, ω²)`. The
//! adversary observes `s` and shows the agent `ŝ = π s + c`, `c ~ N(0, δ²)`.
//! The agent plays the affine law `a = κ ŝ + ρ` and collects `−θ s² − φ a²`.
//! A manipulation is feasible when `ε′ ≤ π ≤ ε`, `π ≠ 0` and the channel keeps
//! at least `½ log λ` nats of mutual information about the state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default bound on `|s|` beyond which a rollout is declared divergent.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e9;

/// Relative slack applied to the mutual-information test so that actions
/// built to saturate the constraint are not rejected by rounding.
pub const FEASIBILITY_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("manipulation with pi = 0 and delta2 = 0 is undefined")]
    UndefinedAction,
    #[error("manipulation coefficient pi must be nonzero")]
    ZeroCoefficient,
    #[error("manipulation coefficient {pi} outside [{eps_lo}, {eps_hi}]")]
    CoefficientOutOfBounds { pi: f64, eps_lo: f64, eps_hi: f64 },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Per-stage system coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageParams {
    pub alpha: f64,
    pub beta: f64,
    pub omega2: f64,
    pub theta: f64,
    pub phi: f64,
}

impl StageParams {
    /// Default time-invariant stage used throughout the numerical study.
    pub const TABLE1: StageParams = StageParams {
        alpha: -0.5,
        beta: -1.5,
        omega2: 1.0,
        theta: 2.0,
        phi: 1.0,
    };

    fn violations(&self, prefix: &str, out: &mut Vec<String>) {
        let finite = [self.alpha, self.beta, self.omega2, self.theta, self.phi]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            out.push(format!("{prefix}stage parameters must be finite"));
        }
        if self.alpha == 0.0 {
            out.push(format!("{prefix}alpha must be nonzero"));
        }
        if self.beta == 0.0 {
            out.push(format!("{prefix}beta must be nonzero"));
        }
        if !(self.omega2 > 0.0) {
            out.push(format!("{prefix}omega2 must be positive"));
        }
        if !(self.theta > 0.0) {
            out.push(format!("{prefix}theta must be positive"));
        }
        if !(self.phi > 0.0) {
            out.push(format!("{prefix}phi must be positive"));
        }
    }
}

/// Gaussian belief `N(mu, sigma2)` about the current state, shared by both
/// players.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub mu: f64,
    pub sigma2: f64,
}

impl Belief {
    pub fn new(mu: f64, sigma2: f64) -> Self {
        Belief { mu, sigma2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StageSchedule {
    TimeInvariant(StageParams),
    PerStage(Vec<StageParams>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub schedule: StageSchedule,
    pub horizon: usize,
    pub initial_belief: Belief,
}

impl ModelParams {
    pub fn time_invariant(stage: StageParams, horizon: usize, initial_belief: Belief) -> Self {
        ModelParams {
            schedule: StageSchedule::TimeInvariant(stage),
            horizon,
            initial_belief,
        }
    }

    pub fn per_stage(stages: Vec<StageParams>, initial_belief: Belief) -> Self {
        let horizon = stages.len();
        ModelParams {
            schedule: StageSchedule::PerStage(stages),
            horizon,
            initial_belief,
        }
    }

    /// Default parameters (α = −0.5, β = −1.5, ω² = 1, θ = 2, φ = 1, μ₁ = 0, σ₁² = 1) with the given horizon.
    pub fn table1(horizon: usize) -> Self {
        Self::time_invariant(StageParams::TABLE1, horizon, Belief::new(0.0, 1.0))
    }

    /// Parameters of stage `i` (zero-based).
    pub fn stage(&self, i: usize) -> &StageParams {
        match &self.schedule {
            StageSchedule::TimeInvariant(p) => p,
            StageSchedule::PerStage(v) => &v[i],
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self.schedule, StageSchedule::TimeInvariant(_))
    }

    pub fn stages(&self) -> impl Iterator<Item = &StageParams> + '_ {
        (0..self.horizon).map(move |i| self.stage(i))
    }
}

/// Bounds on the manipulation: `eps_lo ≤ π ≤ eps_hi` and the mutual
/// information ratio `(π²σ² + δ²)/δ² ≥ lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConstraints {
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub lambda: f64,
}

impl AdversaryConstraints {
    pub fn new(eps_lo: f64, eps_hi: f64, lambda: f64) -> Self {
        AdversaryConstraints {
            eps_lo,
            eps_hi,
            lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryAction {
    pub pi: f64,
    pub delta2: f64,
}

impl AdversaryAction {
    pub fn new(pi: f64, delta2: f64) -> Self {
        AdversaryAction { pi, delta2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentAction {
    pub kappa: f64,
    pub rho: f64,
}

impl AgentAction {
    pub fn new(kappa: f64, rho: f64) -> Self {
        AgentAction { kappa, rho }
    }

    pub fn act(&self, s_hat: f64) -> f64 {
        self.kappa * s_hat + self.rho
    }
}

/// One stage of a simulated game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Common belief held before the stage-`i` observation.
    pub belief: Belief,
    pub manipulation: AdversaryAction,
    pub control: AgentAction,
    pub s: f64,
    pub s_hat: f64,
    pub a: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub stages: Vec<StageRecord>,
    pub total_reward: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), ModelError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(ModelError::Invalid(self.violations.join("; ")))
        }
    }
}

/// Checks every precondition on the model and adversary bounds, collecting
/// all violations rather than stopping at the first.
pub fn validate(params: &ModelParams, constraints: &AdversaryConstraints) -> ValidationReport {
    let mut v = Vec::new();
    if params.horizon < 1 {
        v.push("horizon must be at least 1".to_string());
    }
    match &params.schedule {
        StageSchedule::TimeInvariant(p) => p.violations("", &mut v),
        StageSchedule::PerStage(stages) => {
            if stages.len() != params.horizon {
                v.push(format!(
                    "per-stage list has {} entries but horizon is {}",
                    stages.len(),
                    params.horizon
                ));
            }
            for (i, p) in stages.iter().enumerate() {
                p.violations(&format!("stage {}: ", i + 1), &mut v);
            }
        }
    }
    let b = params.initial_belief;
    if !b.mu.is_finite() {
        v.push("mu1 must be finite".to_string());
    }
    if !(b.sigma2 > 0.0) || !b.sigma2.is_finite() {
        v.push("sigma1_sq must be positive".to_string());
    }
    v.extend(constraint_violations(constraints));
    ValidationReport { violations: v }
}

pub fn constraint_violations(c: &AdversaryConstraints) -> Vec<String> {
    let mut v = Vec::new();
    if !c.eps_lo.is_finite() || !c.eps_hi.is_finite() {
        v.push("eps_lo and eps_hi must be finite".to_string());
    }
    if !(c.eps_lo <= c.eps_hi) {
        v.push("eps_lo must not exceed eps_hi".to_string());
    }
    if !(c.lambda > 1.0) || !c.lambda.is_finite() {
        v.push("lambda must exceed 1".to_string());
    }
    v
}

pub fn step_dynamics(s: f64, a: f64, z: f64, p: &StageParams) -> f64 {
    p.alpha * s + p.beta * a + z
}

pub fn stage_reward(s: f64, a: f64, p: &StageParams) -> f64 {
    -p.theta * s * s - p.phi * a * a
}

/// Mutual-information ratio `(π²σ² + δ²)/δ²`; infinite for a noiseless
/// channel.
pub fn mi_ratio(action: &AdversaryAction, belief: &Belief) -> Result<f64, ModelError> {
    if action.delta2 == 0.0 {
        if action.pi == 0.0 {
            return Err(ModelError::UndefinedAction);
        }
        return Ok(f64::INFINITY);
    }
    let signal = action.pi * action.pi * belief.sigma2;
    Ok((signal + action.delta2) / action.delta2)
}

pub fn is_feasible(action: &AdversaryAction, belief: &Belief, c: &AdversaryConstraints) -> bool {
    if action.pi == 0.0 || action.pi < c.eps_lo || action.pi > c.eps_hi || action.delta2 < 0.0 {
        return false;
    }
    match mi_ratio(action, belief) {
        Ok(ratio) => ratio >= c.lambda * (1.0 - FEASIBILITY_RTOL),
        Err(_) => false,
    }
}

/// The noisiest feasible manipulation for a given coefficient:
/// `δ² = π²σ²/(λ − 1)`, which meets the information bound with equality.
pub fn max_variance_action(
    pi: f64,
    belief: &Belief,
    c: &AdversaryConstraints,
) -> Result<AdversaryAction, ModelError> {
    if pi == 0.0 {
        return Err(ModelError::ZeroCoefficient);
    }
    if pi < c.eps_lo || pi > c.eps_hi {
        return Err(ModelError::CoefficientOutOfBounds {
            pi,
            eps_lo: c.eps_lo,
            eps_hi: c.eps_hi,
        });
    }
    Ok(saturating_action(pi, belief.sigma2, c.lambda))
}

/// `(π, π²σ²/(λ − 1))` without bound checks.
pub(crate) fn saturating_action(pi: f64, sigma2: f64, lambda: f64) -> AdversaryAction {
    AdversaryAction::new(pi, pi * pi * sigma2 / (lambda - 1.0))
}
