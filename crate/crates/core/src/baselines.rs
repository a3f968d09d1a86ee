//! Non-strategic reference agents.
//!
//! The naive agent runs plain LQR on its belief and ignores the manipulation
//! entirely (`ρ = 0`). Its optimal pure attack flips the sign of the
//! coefficient. The alert agent knows an adversary is present and
//! plays the pure-equilibrium control for a guessed coefficient `π̂`, but does
//! not anticipate randomization.
//!
//! The attack `g^A = (−ε, ε²σ²/(λ−1))` is stated for symmetric bounds
//! `−ε′ = ε`. For other bounds we play the bound farther from 1, the
//! coefficient the naive agent assumes. This is a generalization checked by
//! exhaustive search on short horizons, not a derived optimum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{
    classify_regime, AdversaryRule, AgentRule, CoefficientMixture, StageStrategy, StrategyProfile,
};
use crate::lqg::{feedback_gain, theta_tilde_ladder};
use crate::model::{
    saturating_action, AdversaryAction, AdversaryConstraints, AgentAction, Belief, ModelParams, StageParams,
};
use crate::stationary::{solve_fixed_point, FixedPointMap, StationaryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("alert agent needs a nonzero assumed coefficient")]
    ZeroPiHat,
    #[error("no nonzero attack coefficient in [{eps_lo}, {eps_hi}]")]
    NoAttack { eps_lo: f64, eps_hi: f64 },
    #[error("alert agent needs eps_lo = eps_hi or eps_lo < 0 < eps_hi (got [{eps_lo}, {eps_hi}])")]
    NoReferenceAdversary { eps_lo: f64, eps_hi: f64 },
    #[error(transparent)]
    Stationary(#[from] StationaryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineSpec {
    Naive,
    Alert { pi_hat: f64 },
}

impl BaselineSpec {
    pub fn validate(&self) -> Result<(), BaselineError> {
        match *self {
            BaselineSpec::Alert { pi_hat } if pi_hat == 0.0 || !pi_hat.is_finite() => {
                Err(BaselineError::ZeroPiHat)
            }
            _ => Ok(()),
        }
    }
}

/// LQR control on the belief alone: `(−g, 0)`.
pub fn naive_agent_rule(_belief: &Belief, theta_tilde_next: f64, p: &StageParams) -> AgentAction {
    AgentAction::new(-feedback_gain(theta_tilde_next, p), 0.0)
}

/// Coefficient of the attack on the naive agent: the bound farther from the
/// unmanipulated coefficient 1, which is `−ε` for symmetric bounds.
pub fn naive_attack_coefficient(c: &AdversaryConstraints) -> Result<f64, BaselineError> {
    let pi = if (c.eps_lo - 1.0).abs() >= (c.eps_hi - 1.0).abs() {
        c.eps_lo
    } else {
        c.eps_hi
    };
    if pi == 0.0 {
        Err(BaselineError::NoAttack {
            eps_lo: c.eps_lo,
            eps_hi: c.eps_hi,
        })
    } else {
        Ok(pi)
    }
}

pub fn optimal_attack_on_naive(
    belief: &Belief,
    c: &AdversaryConstraints,
) -> Result<AdversaryAction, BaselineError> {
    let pi = naive_attack_coefficient(c)?;
    Ok(saturating_action(pi, belief.sigma2, c.lambda))
}

/// Pure-equilibrium control for an assumed coefficient `π̂`.
pub fn alert_agent_rule(
    belief: &Belief,
    pi_hat: f64,
    theta_tilde_next: f64,
    p: &StageParams,
    lambda: f64,
) -> Result<AgentAction, BaselineError> {
    if pi_hat == 0.0 {
        return Err(BaselineError::ZeroPiHat);
    }
    let g = feedback_gain(theta_tilde_next, p);
    Ok(AgentAction::new(
        -g * (lambda - 1.0) / (lambda * pi_hat),
        -g * belief.mu / lambda,
    ))
}

fn stationary_theta_tilde(p: &StageParams, lambda: f64) -> Result<f64, BaselineError> {
    Ok(solve_fixed_point(FixedPointMap::L, p, lambda)?.theta_tilde)
}

/// Naive agent against `g^A`, one rule for every stage.
pub fn naive_stationary_profile(
    p: &StageParams,
    c: &AdversaryConstraints,
) -> Result<StrategyProfile, BaselineError> {
    let pi = naive_attack_coefficient(c)?;
    let g = feedback_gain(stationary_theta_tilde(p, c.lambda)?, p);
    Ok(StrategyProfile {
        regime: classify_regime(c, usize::MAX),
        lambda: c.lambda,
        stages: vec![StageStrategy {
            agent: AgentRule::Affine {
                kappa: -g,
                rho_gain: 0.0,
            },
            adversary: AdversaryRule::Saturating(CoefficientMixture::point(pi)),
            continuation: None,
        }],
        stationary: true,
    })
}

/// Naive agent against `g^A` with the finite-horizon `θ̃` ladder.
pub fn naive_finite_profile(
    params: &ModelParams,
    c: &AdversaryConstraints,
) -> Result<StrategyProfile, BaselineError> {
    let pi = naive_attack_coefficient(c)?;
    let ladder = theta_tilde_ladder(params);
    let stages = (0..params.horizon)
        .map(|i| StageStrategy {
            agent: AgentRule::Affine {
                kappa: -feedback_gain(ladder.get(i + 1), params.stage(i)),
                rho_gain: 0.0,
            },
            adversary: AdversaryRule::Saturating(CoefficientMixture::point(pi)),
            continuation: None,
        })
        .collect();
    Ok(StrategyProfile {
        regime: classify_regime(c, params.horizon),
        lambda: c.lambda,
        stages,
        stationary: false,
    })
}

/// Alert agent facing the stationary equilibrium adversary: the zero-mean
/// extreme mixture when the bounds straddle zero, the common bound when they
/// coincide.
pub fn alert_stationary_profile(
    p: &StageParams,
    c: &AdversaryConstraints,
    pi_hat: f64,
) -> Result<StrategyProfile, BaselineError> {
    if pi_hat == 0.0 {
        return Err(BaselineError::ZeroPiHat);
    }
    let mixture = if c.eps_lo < 0.0 && c.eps_hi > 0.0 {
        CoefficientMixture::zero_mean_extremes(c.eps_lo, c.eps_hi)
    } else if c.eps_lo == c.eps_hi && c.eps_hi != 0.0 {
        CoefficientMixture::point(c.eps_hi)
    } else {
        return Err(BaselineError::NoReferenceAdversary {
            eps_lo: c.eps_lo,
            eps_hi: c.eps_hi,
        });
    };
    let lambda = c.lambda;
    let g = feedback_gain(stationary_theta_tilde(p, lambda)?, p);
    Ok(StrategyProfile {
        regime: classify_regime(c, usize::MAX),
        lambda,
        stages: vec![StageStrategy {
            agent: AgentRule::Affine {
                kappa: -g * (lambda - 1.0) / (lambda * pi_hat),
                rho_gain: -g / lambda,
            },
            adversary: AdversaryRule::Saturating(mixture),
            continuation: None,
        }],
        stationary: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mi_ratio;

    const T1: StageParams = StageParams::TABLE1;

    #[test]
    fn naive_rule_table1() {
        let t = stationary_theta_tilde(&T1, 2.0).unwrap();
        let a = naive_agent_rule(&Belief::new(3.0, 1.0), t, &T1);
        assert!((a.kappa + 0.27492).abs() < 1e-5, "{}", a.kappa);
        assert_eq!(a.rho, 0.0);
        assert_eq!(naive_agent_rule(&Belief::new(1.0, 1.0), 0.0, &T1).kappa, 0.0);
    }

    #[test]
    fn attack_examples() {
        let b = Belief::new(0.0, 1.0);
        let a = optimal_attack_on_naive(&b, &AdversaryConstraints::new(-1.0, 1.0, 2.0)).unwrap();
        assert_eq!(a, AdversaryAction::new(-1.0, 1.0));
        let a = optimal_attack_on_naive(&b, &AdversaryConstraints::new(-2.0, 2.0, 2.0)).unwrap();
        assert_eq!(a, AdversaryAction::new(-2.0, 4.0));
        assert!((mi_ratio(&a, &b).unwrap() - 2.0).abs() < 1e-15);
        // asymmetric: the bound farther from 1
        let a = optimal_attack_on_naive(&b, &AdversaryConstraints::new(-0.5, 1.0, 2.0)).unwrap();
        assert_eq!(a.pi, -0.5);
        let a = optimal_attack_on_naive(&b, &AdversaryConstraints::new(0.5, 2.0, 2.0)).unwrap();
        assert_eq!(a.pi, 2.0);
        let a = optimal_attack_on_naive(&b, &AdversaryConstraints::new(-1.5, 0.5, 2.0)).unwrap();
        assert_eq!(a.pi, -1.5);
        assert!(optimal_attack_on_naive(&b, &AdversaryConstraints::new(0.0, 1.0, 2.0)).is_err());
    }

    #[test]
    fn alert_examples() {
        let t = stationary_theta_tilde(&T1, 2.0).unwrap();
        let a = alert_agent_rule(&Belief::new(0.0, 1.0), 1.0, t, &T1, 2.0).unwrap();
        assert!((a.kappa + 0.13746).abs() < 1e-5);
        assert_eq!(a.rho, 0.0);
        assert_eq!(
            alert_agent_rule(&Belief::new(0.0, 1.0), 0.0, t, &T1, 2.0),
            Err(BaselineError::ZeroPiHat)
        );
        let big = alert_agent_rule(&Belief::new(1.0, 1.0), 1.0, t, &T1, 1e12).unwrap();
        let g = feedback_gain(t, &T1);
        assert!((big.kappa + g).abs() < 1e-9 && big.rho.abs() < 1e-9);
        assert!(BaselineSpec::Alert { pi_hat: 0.0 }.validate().is_err());
        assert!(BaselineSpec::Naive.validate().is_ok());
    }

    #[test]
    fn alert_matches_pure_when_guess_is_right() {
        let c = AdversaryConstraints::new(1.5, 1.5, 2.0);
        let alert = alert_stationary_profile(&T1, &c, 1.5).unwrap();
        let pure = crate::stationary::stationary_pure_profile(&T1, &c).unwrap();
        let b = Belief::new(0.7, 1.3);
        let (x, y) = (alert.rule(0).agent.action(&b), pure.rule(0).agent.action(&b));
        assert!((x.kappa - y.kappa).abs() < 1e-15 && (x.rho - y.rho).abs() < 1e-15);
        assert!(alert_stationary_profile(&T1, &AdversaryConstraints::new(0.5, 1.0, 2.0), 1.0).is_err());
    }

    #[test]
    fn finite_naive_profile() {
        let params = ModelParams::table1(3);
        let prof = naive_finite_profile(&params, &AdversaryConstraints::new(-1.0, 1.0, 2.0)).unwrap();
        assert_eq!(prof.stages.len(), 3);
        assert_eq!(prof.rule(2).agent.action(&params.initial_belief).kappa, 0.0);
        assert!((prof.rule(1).agent.action(&params.initial_belief).kappa + 1.5 / 5.5).abs() < 1e-15);
    }
}
