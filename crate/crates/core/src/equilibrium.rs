//! Finite-horizon subgame perfect equilibria.
//!
//! Which equilibrium exists depends only on the coefficient bounds `[ε′, ε]`
//! and the horizon. When both bounds coincide the adversary has a dominant
//! coefficient and the unique equilibrium is in pure strategies. When the
//! bounds straddle zero the adversary randomizes with zero-mean coefficient
//! and the agent ignores the observation (babbling). Same-sign bounds admit a
//! unique mixed equilibrium for two stages only; bounds touching zero admit
//! none.
//!
//! Every equilibrium value is quadratic in the belief,
//! `V_i(b) = −A_i μ² − B_i σ² − const`, with `A = θ̃` and `B` one of the
//! ladders `θ̂` (pure) or `θ̌` (babbling).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lqg::{feedback_gain, theta_tilde_ladder};
use crate::model::{
    saturating_action, validate, AdversaryAction, AdversaryConstraints, AgentAction, Belief, ModelParams,
};

/// Absolute slack for probability sums and the zero-mean condition.
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("solver for {expected:?} called in regime {found:?}")]
    RegimeMismatch {
        expected: RegimeClass,
        found: RegimeClass,
    },
    #[error("no equilibrium constructed for regime {regime:?}: {reason}")]
    Unsupported { regime: RegimeClass, reason: String },
    #[error("invalid adversary support: {0}")]
    SupportSpec(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeClass {
    DegenerateOneStage,
    InfeasibleAdversary,
    PureUnique,
    BehavioralContinuum,
    NoSpe,
    TwoStageUnique,
    UnknownOpen,
}

impl RegimeClass {
    pub fn has_equilibrium(self) -> bool {
        matches!(
            self,
            RegimeClass::DegenerateOneStage
                | RegimeClass::PureUnique
                | RegimeClass::BehavioralContinuum
                | RegimeClass::TwoStageUnique
        )
    }
}

pub fn classify_regime(c: &AdversaryConstraints, horizon: usize) -> RegimeClass {
    let (lo, hi) = (c.eps_lo, c.eps_hi);
    if lo == 0.0 && hi == 0.0 {
        // no feasible manipulation at all, whatever the horizon
        RegimeClass::InfeasibleAdversary
    } else if horizon <= 1 {
        RegimeClass::DegenerateOneStage
    } else if lo == hi {
        RegimeClass::PureUnique
    } else if lo < 0.0 && hi > 0.0 {
        RegimeClass::BehavioralContinuum
    } else if lo == 0.0 || hi == 0.0 {
        RegimeClass::NoSpe
    } else if horizon == 2 {
        RegimeClass::TwoStageUnique
    } else {
        RegimeClass::UnknownOpen
    }
}

/// The three backward coefficient sequences, each of length `N + 1` with a
/// zero terminal entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientLadder {
    pub theta_tilde: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub theta_check: Vec<f64>,
}

impl CoefficientLadder {
    pub fn build(params: &ModelParams, lambda: f64) -> Self {
        let n = params.horizon;
        let theta_tilde = theta_tilde_ladder(params).0;
        let mut theta_hat = vec![0.0; n + 1];
        let mut theta_check = vec![0.0; n + 1];
        let keep = (lambda - 1.0) / lambda;
        for i in (0..n).rev() {
            let p = params.stage(i);
            let a2 = p.alpha * p.alpha;
            let b2 = p.beta * p.beta;
            let t = theta_tilde[i + 1];
            let control_gain = t * t * a2 * b2 / (p.phi + t * b2);
            let h = theta_hat[i + 1];
            theta_hat[i] = p.theta + h * a2 - (control_gain + (h - t) * a2) * keep;
            let k = theta_check[i + 1];
            theta_check[i] = p.theta + k * a2 - (k - t) * a2 * keep;
        }
        CoefficientLadder {
            theta_tilde,
            theta_hat,
            theta_check,
        }
    }

    pub fn horizon(&self) -> usize {
        self.theta_tilde.len() - 1
    }
}

pub fn noise_variances(params: &ModelParams) -> Vec<f64> {
    params.stages().map(|p| p.omega2).collect()
}

/// `Σ_{j>i} B_j ω²_{j−1}` over the remaining stages, zero-based.
fn noise_tail(var_coefs: &[f64], stage: usize, noise: &[f64]) -> f64 {
    let n = var_coefs.len() - 1;
    (stage + 1..n).map(|j| var_coefs[j] * noise[j - 1]).sum()
}

fn quadratic_value(
    belief: &Belief,
    ladder: &CoefficientLadder,
    var_coefs: &[f64],
    stage: usize,
    noise: &[f64],
) -> f64 {
    -ladder.theta_tilde[stage] * belief.mu * belief.mu
        - var_coefs[stage] * belief.sigma2
        - noise_tail(var_coefs, stage, noise)
}

/// Value of the pure equilibrium from (zero-based) `stage` onward.
pub fn pure_value(belief: &Belief, ladder: &CoefficientLadder, stage: usize, noise: &[f64]) -> f64 {
    quadratic_value(belief, ladder, &ladder.theta_hat, stage, noise)
}

/// Value of any babbling equilibrium from (zero-based) `stage` onward.
pub fn behavioral_value(belief: &Belief, ladder: &CoefficientLadder, stage: usize, noise: &[f64]) -> f64 {
    quadratic_value(belief, ladder, &ladder.theta_check, stage, noise)
}

/// Closed-form value of the next stage, `−mean_coef μ² − var_coef σ² − constant`,
/// as seen from the stage that owns it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationValue {
    pub mean_coef: f64,
    pub var_coef: f64,
    pub constant: f64,
}

impl ContinuationValue {
    pub const ZERO: ContinuationValue = ContinuationValue {
        mean_coef: 0.0,
        var_coef: 0.0,
        constant: 0.0,
    };

    pub fn eval(&self, b: &Belief) -> f64 {
        -self.mean_coef * b.mu * b.mu - self.var_coef * b.sigma2 - self.constant
    }

    fn from_ladder(ladder: &CoefficientLadder, var_coefs: &[f64], stage: usize, noise: &[f64]) -> Self {
        ContinuationValue {
            mean_coef: ladder.theta_tilde[stage + 1],
            var_coef: var_coefs[stage + 1],
            constant: noise_tail(var_coefs, stage + 1, noise),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedCoefficient {
    pub pi: f64,
    pub prob: f64,
}

/// Finite distribution over manipulation coefficients. Each coefficient is
/// played with the noisiest feasible variance at the current belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMixture {
    pub points: Vec<WeightedCoefficient>,
}

impl CoefficientMixture {
    pub fn point(pi: f64) -> Self {
        CoefficientMixture {
            points: vec![WeightedCoefficient { pi, prob: 1.0 }],
        }
    }

    pub fn new(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        CoefficientMixture {
            points: points
                .into_iter()
                .map(|(pi, prob)| WeightedCoefficient { pi, prob })
                .collect(),
        }
    }

    /// Two-point zero-mean mixture on the bounds: `ε′` with probability
    /// `ε/(ε − ε′)`, `ε` with probability `−ε′/(ε − ε′)`.
    pub fn zero_mean_extremes(eps_lo: f64, eps_hi: f64) -> Self {
        let span = eps_hi - eps_lo;
        Self::new([(eps_lo, eps_hi / span), (eps_hi, -eps_lo / span)])
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().map(|w| w.prob * w.pi).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.points.iter().map(|w| w.prob * w.pi * w.pi).sum()
    }

    pub fn at(&self, belief: &Belief, lambda: f64) -> BehavioralAdversaryStrategy {
        BehavioralAdversaryStrategy {
            support: self
                .points
                .iter()
                .map(|w| (saturating_action(w.pi, belief.sigma2, lambda), w.prob))
                .collect(),
        }
    }

    /// Checks the zero-mean babbling conditions against the bounds.
    pub fn check_babbling(&self, c: &AdversaryConstraints) -> Result<(), EquilibriumError> {
        let active: Vec<_> = self.points.iter().filter(|w| w.prob > 0.0).collect();
        if active.len() < 2 {
            return Err(EquilibriumError::SupportSpec(
                "support needs at least two points with positive probability".into(),
            ));
        }
        if self.points.iter().any(|w| w.prob < 0.0 || !w.prob.is_finite()) {
            return Err(EquilibriumError::SupportSpec(
                "probabilities must be nonnegative".into(),
            ));
        }
        let total: f64 = self.points.iter().map(|w| w.prob).sum();
        if (total - 1.0).abs() > SUPPORT_TOL {
            return Err(EquilibriumError::SupportSpec(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        for w in &active {
            if w.pi == 0.0 || w.pi < c.eps_lo || w.pi > c.eps_hi {
                return Err(EquilibriumError::SupportSpec(format!(
                    "coefficient {} infeasible for bounds [{}, {}]",
                    w.pi, c.eps_lo, c.eps_hi
                )));
            }
        }
        let scale = active.iter().map(|w| w.pi.abs()).fold(0.0, f64::max);
        if self.mean().abs() > SUPPORT_TOL * scale.max(1.0) {
            return Err(EquilibriumError::SupportSpec(format!(
                "coefficient mean {} is not zero",
                self.mean()
            )));
        }
        Ok(())
    }
}

/// Mixed adversary action resolved at a particular belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehavioralAdversaryStrategy {
    pub support: Vec<(AdversaryAction, f64)>,
}

impl BehavioralAdversaryStrategy {
    pub fn point(action: AdversaryAction) -> Self {
        BehavioralAdversaryStrategy {
            support: vec![(action, 1.0)],
        }
    }

    pub fn mean_pi(&self) -> f64 {
        self.support.iter().map(|(a, p)| p * a.pi).sum()
    }

    pub fn second_moment_pi(&self) -> f64 {
        self.support.iter().map(|(a, p)| p * a.pi * a.pi).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AdversaryRule {
    /// Coefficients drawn from the mixture, each with saturating noise.
    Saturating(CoefficientMixture),
    /// A belief-independent channel, e.g. the noiseless `(1, 0)` of plain LQR.
    Fixed(AdversaryAction),
}

impl AdversaryRule {
    pub fn resolve(&self, belief: &Belief, lambda: f64) -> BehavioralAdversaryStrategy {
        match self {
            AdversaryRule::Saturating(m) => m.at(belief, lambda),
            AdversaryRule::Fixed(a) => BehavioralAdversaryStrategy::point(*a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgentRule {
    /// `κ` fixed, `ρ = rho_gain · μ`.
    Affine { kappa: f64, rho_gain: f64 },
    /// Best response to a saturating coefficient mixture with the given
    /// first two moments, for continuation gain `gain = θ̃αβ/(φ + θ̃β²)`.
    /// `kappa_scale` multiplies the resulting `κ` and leaves `ρ` alone.
    MixtureResponse {
        gain: f64,
        pi_mean: f64,
        pi_second_moment: f64,
        lambda: f64,
        kappa_scale: f64,
    },
}

impl AgentRule {
    pub fn action(&self, b: &Belief) -> AgentAction {
        match *self {
            AgentRule::Affine { kappa, rho_gain } => AgentAction::new(kappa, rho_gain * b.mu),
            AgentRule::MixtureResponse {
                gain,
                pi_mean,
                pi_second_moment,
                lambda,
                kappa_scale,
            } => {
                let mu2 = b.mu * b.mu;
                let spread =
                    pi_second_moment * (mu2 + lambda / (lambda - 1.0) * b.sigma2) - pi_mean * pi_mean * mu2;
                let kappa = if pi_mean == 0.0 {
                    0.0
                } else {
                    -gain * pi_mean * b.sigma2 / spread
                };
                let rho = -pi_mean * b.mu * kappa - gain * b.mu;
                AgentAction::new(kappa * kappa_scale, rho)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStrategy {
    pub agent: AgentRule,
    pub adversary: AdversaryRule,
    /// Equilibrium value of the following stage, when the profile has one in
    /// closed form.
    pub continuation: Option<ContinuationValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub regime: RegimeClass,
    pub lambda: f64,
    pub stages: Vec<StageStrategy>,
    /// A stationary profile holds one rule that applies at every stage.
    pub stationary: bool,
}

impl StrategyProfile {
    pub fn rule(&self, stage: usize) -> &StageStrategy {
        if self.stationary {
            &self.stages[0]
        } else {
            &self.stages[stage]
        }
    }

    pub fn supports_horizon(&self, horizon: usize) -> bool {
        self.stationary || self.stages.len() == horizon
    }

    /// Copy with every agent gain scaled by `kappa_factor` and the first
    /// support probability of each mixed adversary rule shifted by
    /// `prob_shift` (the second absorbs the difference).
    pub fn perturbed(&self, kappa_factor: f64, prob_shift: f64) -> StrategyProfile {
        let mut out = self.clone();
        for s in &mut out.stages {
            match &mut s.agent {
                AgentRule::Affine { kappa, .. } => *kappa *= kappa_factor,
                AgentRule::MixtureResponse { kappa_scale, .. } => *kappa_scale *= kappa_factor,
            }
            if let AdversaryRule::Saturating(m) = &mut s.adversary {
                if m.points.len() >= 2 && prob_shift != 0.0 {
                    let p0 = (m.points[0].prob + prob_shift).clamp(0.0, 1.0);
                    let moved = p0 - m.points[0].prob;
                    m.points[0].prob = p0;
                    m.points[1].prob -= moved;
                }
            }
        }
        out
    }
}

/// Default member of the babbling continuum, or a caller-chosen support.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SupportSpec {
    #[default]
    Extremes,
    Custom(CoefficientMixture),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub regime: RegimeClass,
    pub ladder: CoefficientLadder,
    pub profile: Option<StrategyProfile>,
    /// Closed-form `V_1^N(b_1)`.
    pub value: Option<f64>,
    pub stage1_agent: Option<AgentAction>,
    pub stage1_adversary: Option<BehavioralAdversaryStrategy>,
    pub note: Option<String>,
}

fn check_regime(
    params: &ModelParams,
    c: &AdversaryConstraints,
    expected: RegimeClass,
) -> Result<(), EquilibriumError> {
    validate(params, c)
        .into_result()
        .map_err(|e| EquilibriumError::Invalid(e.to_string()))?;
    let found = classify_regime(c, params.horizon);
    if found != expected {
        return Err(EquilibriumError::RegimeMismatch { expected, found });
    }
    Ok(())
}

/// Profile of the pure form for an arbitrary coefficient `pi`, without any
/// regime check. It is an equilibrium only when `pi = ε′ = ε`.
pub fn pure_candidate_profile(
    params: &ModelParams,
    lambda: f64,
    pi: f64,
    regime: RegimeClass,
) -> (CoefficientLadder, StrategyProfile) {
    let ladder = CoefficientLadder::build(params, lambda);
    let noise = noise_variances(params);
    let stages = (0..params.horizon)
        .map(|i| {
            let g = feedback_gain(ladder.theta_tilde[i + 1], params.stage(i));
            StageStrategy {
                agent: AgentRule::Affine {
                    kappa: -g * (lambda - 1.0) / (lambda * pi),
                    rho_gain: -g / lambda,
                },
                adversary: AdversaryRule::Saturating(CoefficientMixture::point(pi)),
                continuation: Some(ContinuationValue::from_ladder(
                    &ladder,
                    &ladder.theta_hat,
                    i,
                    &noise,
                )),
            }
        })
        .collect();
    let profile = StrategyProfile {
        regime,
        lambda,
        stages,
        stationary: false,
    };
    (ladder, profile)
}

pub fn solve_pure_spe(
    params: &ModelParams,
    c: &AdversaryConstraints,
) -> Result<(CoefficientLadder, StrategyProfile), EquilibriumError> {
    check_regime(params, c, RegimeClass::PureUnique)?;
    Ok(pure_candidate_profile(
        params,
        c.lambda,
        c.eps_hi,
        RegimeClass::PureUnique,
    ))
}

/// Babbling profile for the given adversary mixture, without validating it.
pub fn babbling_candidate_profile(
    params: &ModelParams,
    lambda: f64,
    mixture: &CoefficientMixture,
    regime: RegimeClass,
) -> (CoefficientLadder, StrategyProfile) {
    let ladder = CoefficientLadder::build(params, lambda);
    let noise = noise_variances(params);
    let stages = (0..params.horizon)
        .map(|i| {
            let g = feedback_gain(ladder.theta_tilde[i + 1], params.stage(i));
            StageStrategy {
                agent: AgentRule::Affine {
                    kappa: 0.0,
                    rho_gain: -g,
                },
                adversary: AdversaryRule::Saturating(mixture.clone()),
                continuation: Some(ContinuationValue::from_ladder(
                    &ladder,
                    &ladder.theta_check,
                    i,
                    &noise,
                )),
            }
        })
        .collect();
    let profile = StrategyProfile {
        regime,
        lambda,
        stages,
        stationary: false,
    };
    (ladder, profile)
}

pub fn solve_behavioral_spe(
    params: &ModelParams,
    c: &AdversaryConstraints,
    support: &SupportSpec,
) -> Result<(CoefficientLadder, StrategyProfile), EquilibriumError> {
    check_regime(params, c, RegimeClass::BehavioralContinuum)?;
    let mixture = match support {
        SupportSpec::Extremes => CoefficientMixture::zero_mean_extremes(c.eps_lo, c.eps_hi),
        SupportSpec::Custom(m) => m.clone(),
    };
    mixture.check_babbling(c)?;
    Ok(babbling_candidate_profile(
        params,
        c.lambda,
        &mixture,
        RegimeClass::BehavioralContinuum,
    ))
}

/// Equilibrium probability of the lower bound in the two-stage same-sign
/// game, `ε/(ε′ + ε)`.
pub fn two_stage_lower_prob(c: &AdversaryConstraints) -> f64 {
    c.eps_hi / (c.eps_lo + c.eps_hi)
}

pub fn two_stage_mixture(c: &AdversaryConstraints) -> CoefficientMixture {
    let p = two_stage_lower_prob(c);
    CoefficientMixture::new([(c.eps_lo, p), (c.eps_hi, c.eps_lo / (c.eps_lo + c.eps_hi))])
}

/// Closed-form two-stage value for a saturating stage-1 mixture with the
/// given coefficient moments, when the agent best-responds.
pub fn two_stage_value(params: &ModelParams, lambda: f64, pi_mean: f64, pi_second: f64, b1: &Belief) -> f64 {
    let p1 = params.stage(0);
    let theta2 = params.stage(1).theta;
    let (a, b) = (p1.alpha, p1.beta);
    let k = p1.phi + theta2 * b * b;
    let mu2 = b1.mu * b1.mu;
    let spread = pi_second * (mu2 + lambda / (lambda - 1.0) * b1.sigma2) - pi_mean * pi_mean * mu2;
    -(p1.theta + theta2 * a * a - theta2 * theta2 * a * a * b * b / k) * mu2
        - theta2 * p1.omega2
        - (p1.theta + theta2 * a * a) * b1.sigma2
        + theta2 * theta2 * a * a * b * b * pi_mean * pi_mean * b1.sigma2 * b1.sigma2 / (k * spread)
}

pub fn two_stage_candidate_profile(
    params: &ModelParams,
    lambda: f64,
    mixture: &CoefficientMixture,
) -> StrategyProfile {
    let theta2 = params.stage(1).theta;
    let gain = feedback_gain(theta2, params.stage(0));
    let stage1 = StageStrategy {
        agent: AgentRule::MixtureResponse {
            gain,
            pi_mean: mixture.mean(),
            pi_second_moment: mixture.second_moment(),
            lambda,
            kappa_scale: 1.0,
        },
        adversary: AdversaryRule::Saturating(mixture.clone()),
        continuation: Some(ContinuationValue {
            mean_coef: theta2,
            var_coef: theta2,
            constant: 0.0,
        }),
    };
    // The agent's last-stage action is dominant, so any adversary rule is a
    // best response; the stage-1 rule is repeated.
    let stage2 = StageStrategy {
        agent: AgentRule::Affine {
            kappa: 0.0,
            rho_gain: 0.0,
        },
        adversary: AdversaryRule::Saturating(mixture.clone()),
        continuation: Some(ContinuationValue::ZERO),
    };
    StrategyProfile {
        regime: RegimeClass::TwoStageUnique,
        lambda,
        stages: vec![stage1, stage2],
        stationary: false,
    }
}

pub fn solve_two_stage_spe(
    params: &ModelParams,
    c: &AdversaryConstraints,
    b1: &Belief,
) -> Result<(StrategyProfile, f64), EquilibriumError> {
    check_regime(params, c, RegimeClass::TwoStageUnique)?;
    let mixture = two_stage_mixture(c);
    let profile = two_stage_candidate_profile(params, c.lambda, &mixture);
    let value = two_stage_value(params, c.lambda, mixture.mean(), mixture.second_moment(), b1);
    Ok((profile, value))
}

/// Single-stage game: the agent's zero action is dominant and the adversary
/// is indifferent. The adversary rule is the zero-mean mixture when the
/// bounds straddle zero, and otherwise the bound of larger magnitude.
pub fn solve_one_stage(
    params: &ModelParams,
    c: &AdversaryConstraints,
) -> Result<StrategyProfile, EquilibriumError> {
    check_regime(params, c, RegimeClass::DegenerateOneStage)?;
    let mixture = if c.eps_lo < 0.0 && c.eps_hi > 0.0 {
        CoefficientMixture::zero_mean_extremes(c.eps_lo, c.eps_hi)
    } else if c.eps_hi.abs() >= c.eps_lo.abs() {
        CoefficientMixture::point(c.eps_hi)
    } else {
        CoefficientMixture::point(c.eps_lo)
    };
    Ok(StrategyProfile {
        regime: RegimeClass::DegenerateOneStage,
        lambda: c.lambda,
        stages: vec![StageStrategy {
            agent: AgentRule::Affine {
                kappa: 0.0,
                rho_gain: 0.0,
            },
            adversary: AdversaryRule::Saturating(mixture),
            continuation: Some(ContinuationValue::ZERO),
        }],
        stationary: false,
    })
}

/// Classifies the game and builds the equilibrium when one is known.
/// Regimes without a constructed equilibrium return a report with no profile.
pub fn solve(
    params: &ModelParams,
    c: &AdversaryConstraints,
    support: &SupportSpec,
) -> Result<EquilibriumReport, EquilibriumError> {
    validate(params, c)
        .into_result()
        .map_err(|e| EquilibriumError::Invalid(e.to_string()))?;
    let regime = classify_regime(c, params.horizon);
    let b1 = params.initial_belief;
    let noise = noise_variances(params);
    let ladder = CoefficientLadder::build(params, c.lambda);
    let (profile, value, note) = match regime {
        RegimeClass::PureUnique => {
            let (_, profile) = solve_pure_spe(params, c)?;
            let v = pure_value(&b1, &ladder, 0, &noise);
            (Some(profile), Some(v), None)
        }
        RegimeClass::BehavioralContinuum => {
            let (_, profile) = solve_behavioral_spe(params, c, support)?;
            let v = behavioral_value(&b1, &ladder, 0, &noise);
            (Some(profile), Some(v), None)
        }
        RegimeClass::TwoStageUnique => {
            let (profile, v) = solve_two_stage_spe(params, c, &b1)?;
            (Some(profile), Some(v), None)
        }
        RegimeClass::DegenerateOneStage => {
            let profile = solve_one_stage(params, c)?;
            let p = params.stage(0);
            let v = -p.theta * (b1.mu * b1.mu + b1.sigma2);
            (Some(profile), Some(v), None)
        }
        RegimeClass::InfeasibleAdversary => (
            None,
            None,
            Some("no feasible manipulation exists when both bounds are zero".to_string()),
        ),
        RegimeClass::NoSpe => (
            None,
            None,
            Some("a bound at zero leaves no equilibrium for two or more stages".to_string()),
        ),
        RegimeClass::UnknownOpen => (
            None,
            None,
            Some("same-sign bounds beyond two stages: equilibrium not characterized".to_string()),
        ),
    };
    let stage1_agent = profile.as_ref().map(|p| p.rule(0).agent.action(&b1));
    let stage1_adversary = profile
        .as_ref()
        .map(|p| p.rule(0).adversary.resolve(&b1, c.lambda));
    Ok(EquilibriumReport {
        regime,
        ladder,
        profile,
        value,
        stage1_agent,
        stage1_adversary,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StageParams;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn regime_examples() {
        let c = |lo, hi| AdversaryConstraints::new(lo, hi, 2.0);
        assert_eq!(
            classify_regime(&c(-1.0, 1.0), 5),
            RegimeClass::BehavioralContinuum
        );
        assert_eq!(classify_regime(&c(1.0, 1.0), 3), RegimeClass::PureUnique);
        assert_eq!(classify_regime(&c(0.0, 1.0), 2), RegimeClass::NoSpe);
        assert_eq!(classify_regime(&c(-1.0, 0.0), 4), RegimeClass::NoSpe);
        assert_eq!(classify_regime(&c(1.0, 2.0), 2), RegimeClass::TwoStageUnique);
        assert_eq!(classify_regime(&c(-2.0, -1.0), 2), RegimeClass::TwoStageUnique);
        assert_eq!(classify_regime(&c(1.0, 2.0), 3), RegimeClass::UnknownOpen);
        assert_eq!(classify_regime(&c(0.0, 0.0), 3), RegimeClass::InfeasibleAdversary);
        assert_eq!(classify_regime(&c(0.0, 1.0), 1), RegimeClass::DegenerateOneStage);
    }

    #[test]
    fn pure_two_stage_table1() {
        let params = ModelParams::table1(2);
        let c = AdversaryConstraints::new(1.0, 1.0, 2.0);
        let (ladder, profile) = solve_pure_spe(&params, &c).unwrap();
        assert!(close(ladder.theta_hat[0], 2.5 - 0.5 * 2.25 / 5.5, 1e-15));
        assert!(close(ladder.theta_hat[0], 2.295454545455, 1e-11));
        let b1 = params.initial_belief;
        let a = profile.rule(0).agent.action(&b1);
        assert!(close(a.kappa, -1.5 / 11.0, 1e-15));
        assert_eq!(a.rho, 0.0);
        let g = profile.rule(0).adversary.resolve(&b1, 2.0);
        assert_eq!(g.support, vec![(AdversaryAction::new(1.0, 1.0), 1.0)]);
        let last = profile.rule(1).agent.action(&Belief::new(3.0, 2.0));
        assert_eq!(last.kappa, 0.0);
        assert_eq!(last.rho, 0.0);
    }

    #[test]
    fn pure_value_examples() {
        let params = ModelParams::table1(2);
        let ladder = CoefficientLadder::build(&params, 2.0);
        let noise = noise_variances(&params);
        let v = pure_value(&Belief::new(0.0, 1.0), &ladder, 0, &noise);
        assert!(close(v, -(2.5 - 0.5 * 2.25 / 5.5) - 2.0, 1e-14));
        assert!(close(
            pure_value(&Belief::new(1.0, 1.0), &ladder, 1, &noise),
            -4.0,
            1e-15
        ));
        assert!(pure_value(&Belief::new(0.0, 1e-300), &ladder, 1, &noise).abs() < 1e-290);
    }

    #[test]
    fn pure_solver_rejects_other_regimes() {
        let params = ModelParams::table1(2);
        let err = solve_pure_spe(&params, &AdversaryConstraints::new(-1.0, 1.0, 2.0)).unwrap_err();
        assert_eq!(
            err,
            EquilibriumError::RegimeMismatch {
                expected: RegimeClass::PureUnique,
                found: RegimeClass::BehavioralContinuum
            }
        );
    }

    #[test]
    fn default_support_probabilities() {
        let m = CoefficientMixture::zero_mean_extremes(-1.0, 1.0);
        assert_eq!(m.points[0].prob, 0.5);
        assert_eq!(m.points[1].prob, 0.5);
        let m = CoefficientMixture::zero_mean_extremes(-1.0, 2.0);
        assert!(close(m.points[0].prob, 2.0 / 3.0, 1e-15));
        assert!(close(m.points[1].prob, 1.0 / 3.0, 1e-15));
        assert!(m.mean().abs() < 1e-15);
    }

    #[test]
    fn behavioral_two_stage_table1() {
        let params = ModelParams::table1(2);
        let c = AdversaryConstraints::new(-1.0, 1.0, 2.0);
        let (ladder, profile) = solve_behavioral_spe(&params, &c, &SupportSpec::Extremes).unwrap();
        assert_eq!(ladder.theta_check[0], 2.5);
        let noise = noise_variances(&params);
        let v = behavioral_value(&Belief::new(0.0, 1.0), &ladder, 0, &noise);
        assert_eq!(v, -4.5);
        assert!(v <= pure_value(&Belief::new(0.0, 1.0), &ladder, 0, &noise));
        let b = Belief::new(0.7, 1.3);
        assert_eq!(
            behavioral_value(&b, &ladder, 1, &noise),
            pure_value(&b, &ladder, 1, &noise)
        );
        for i in 0..2 {
            assert_eq!(profile.rule(i).agent.action(&b).kappa, 0.0);
        }
    }

    #[test]
    fn support_spec_errors() {
        let params = ModelParams::table1(3);
        let c = AdversaryConstraints::new(-1.0, 2.0, 2.0);
        let bad = [
            CoefficientMixture::new([(-1.0, 0.5), (1.0, 0.5), (2.0, 0.0)]).points,
            CoefficientMixture::new([(-1.0, 0.6), (1.0, 0.4)]).points,
            CoefficientMixture::new([(-1.0, 1.0)]).points,
            CoefficientMixture::new([(-2.0, 0.5), (2.0, 0.5)]).points,
            CoefficientMixture::new([(-1.0, 0.5), (1.0, 0.6)]).points,
        ];
        for (k, pts) in bad.iter().enumerate() {
            let spec = SupportSpec::Custom(CoefficientMixture { points: pts.clone() });
            let r = solve_behavioral_spe(&params, &c, &spec);
            // the first one is valid: a zero-probability point is ignored
            if k == 0 {
                assert!(r.is_ok());
            } else {
                assert!(
                    matches!(r, Err(EquilibriumError::SupportSpec(_))),
                    "case {k}: {r:?}"
                );
            }
        }
        // three-point zero-mean support: −0.5 + 0.125 + 0.375 = 0
        let three = CoefficientMixture::new([(-1.0, 0.5), (0.5, 0.25), (1.5, 0.25)]);
        assert!(three.check_babbling(&c).is_ok(), "mean {}", three.mean());
        let off = CoefficientMixture::new([(-1.0, 0.5), (0.5, 0.3), (2.0, 0.2)]);
        assert!(matches!(
            off.check_babbling(&c),
            Err(EquilibriumError::SupportSpec(_))
        ));
    }

    #[test]
    fn two_stage_table1() {
        let params = ModelParams::table1(2);
        let c = AdversaryConstraints::new(1.0, 2.0, 2.0);
        let b1 = params.initial_belief;
        let (profile, v) = solve_two_stage_spe(&params, &c, &b1).unwrap();
        let m = two_stage_mixture(&c);
        assert!(close(m.points[0].prob, 2.0 / 3.0, 1e-15));
        assert!(close(m.mean(), 4.0 / 3.0, 1e-15));
        assert!(close(m.second_moment(), 2.0, 1e-15));
        let a = profile.rule(0).agent.action(&b1);
        assert!(close(a.kappa, -2.0 / 22.0, 1e-15));
        assert_eq!(a.rho, 0.0);
        assert!(close(v, -4.5 + 4.0 / 22.0, 1e-14));
        assert_eq!(
            profile.rule(1).agent.action(&Belief::new(2.0, 1.0)),
            AgentAction::new(0.0, 0.0)
        );
    }

    #[test]
    fn two_stage_rho_vanishes_at_zero_mean_belief() {
        let params = ModelParams::time_invariant(StageParams::TABLE1, 2, Belief::new(0.0, 2.5));
        for (lo, hi) in [(0.3, 0.9), (-3.0, -0.2), (1.0, 5.0)] {
            let c = AdversaryConstraints::new(lo, hi, 1.7);
            let (profile, _) = solve_two_stage_spe(&params, &c, &params.initial_belief).unwrap();
            assert_eq!(profile.rule(0).agent.action(&params.initial_belief).rho, 0.0);
        }
    }

    #[test]
    fn solve_dispatch() {
        let c = AdversaryConstraints::new(0.0, 1.0, 2.0);
        let r = solve(&ModelParams::table1(2), &c, &SupportSpec::Extremes).unwrap();
        assert_eq!(r.regime, RegimeClass::NoSpe);
        assert!(r.profile.is_none() && r.value.is_none());

        let r = solve(
            &ModelParams::table1(1),
            &AdversaryConstraints::new(-1.0, 1.0, 2.0),
            &SupportSpec::Extremes,
        )
        .unwrap();
        assert_eq!(r.regime, RegimeClass::DegenerateOneStage);
        assert_eq!(r.stage1_agent, Some(AgentAction::new(0.0, 0.0)));
        assert_eq!(r.value, Some(-2.0));

        let r = solve(
            &ModelParams::table1(2),
            &AdversaryConstraints::new(1.0, 1.0, 2.0),
            &SupportSpec::Extremes,
        )
        .unwrap();
        assert!(close(r.value.unwrap(), -4.295454545455, 1e-11));
    }

    #[test]
    fn perturbation_moves_gain_and_probability() {
        let params = ModelParams::table1(3);
        let c = AdversaryConstraints::new(-1.0, 1.0, 2.0);
        let (_, profile) = solve_behavioral_spe(&params, &c, &SupportSpec::Extremes).unwrap();
        let p = profile.perturbed(1.1, 0.1);
        match &p.stages[0].adversary {
            AdversaryRule::Saturating(m) => {
                assert!(close(m.points[0].prob, 0.6, 1e-15));
                assert!(close(m.points[1].prob, 0.4, 1e-15));
            }
            _ => unreachable!(),
        }
        let c = AdversaryConstraints::new(1.0, 1.0, 2.0);
        let (_, profile) = solve_pure_spe(&params, &c).unwrap();
        let b = Belief::new(0.0, 1.0);
        let k0 = profile.rule(0).agent.action(&b).kappa;
        let k1 = profile.perturbed(1.1, 0.0).rule(0).agent.action(&b).kappa;
        assert!(close(k1, 1.1 * k0, 1e-15));
    }
}
