//! Infinite-horizon analysis of the time-invariant game.
//!
//! The coefficient recursions become the monotone maps `L` (pure) and `J`
//! (babbling) on the nonnegative quadrant. Iterating from `(0, 0)` climbs to
//! the least fixed point whenever `λ > α²`; otherwise the second coordinate
//! runs off to infinity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{
    AdversaryRule, AgentRule, CoefficientMixture, ContinuationValue, RegimeClass, StageStrategy,
    StrategyProfile,
};
use crate::lqg::feedback_gain;
use crate::model::{AdversaryConstraints, StageParams};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
/// Iteration stops as divergent once a coordinate passes this bound.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationaryError {
    #[error("stationary analysis needs lambda > alpha^2 (lambda = {lambda}, alpha^2 = {alpha2})")]
    LambdaTooSmall { lambda: f64, alpha2: f64 },
    #[error("{0}")]
    Bounds(String),
    #[error("fixed-point iteration did not converge after {0} iterations")]
    NotConverged(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedPointMap {
    /// Pure-strategy coefficient update.
    L,
    /// Babbling coefficient update.
    J,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationaryRegime {
    Pure,
    Behavioral,
}

fn mean_update(x: f64, p: &StageParams) -> f64 {
    p.theta + p.phi * p.alpha * p.alpha * x / (p.phi + p.beta * p.beta * x)
}

pub fn map_l(x: f64, y: f64, p: &StageParams, lambda: f64) -> (f64, f64) {
    let a2 = p.alpha * p.alpha;
    let x_next = mean_update(x, p);
    let y_next =
        p.theta + p.phi * a2 * x / (p.phi + p.beta * p.beta * x) * (lambda - 1.0) / lambda + a2 * y / lambda;
    (x_next, y_next)
}

pub fn map_j(x: f64, y: f64, p: &StageParams, lambda: f64) -> (f64, f64) {
    let a2 = p.alpha * p.alpha;
    let x_next = mean_update(x, p);
    let y_next = p.theta + a2 * x * (lambda - 1.0) / lambda + a2 * y / lambda;
    (x_next, y_next)
}

impl FixedPointMap {
    pub fn apply(self, x: f64, y: f64, p: &StageParams, lambda: f64) -> (f64, f64) {
        match self {
            FixedPointMap::L => map_l(x, y, p, lambda),
            FixedPointMap::J => map_j(x, y, p, lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub theta_tilde: f64,
    /// `θ̂` for `L`, `θ̌` for `J`.
    pub theta_companion: f64,
    pub iterations: usize,
    /// Iterates `map^n(0, 0)` for `n = 0, 1, …` when requested.
    pub trace: Option<Vec<(f64, f64)>>,
    pub converged: bool,
    pub diverged: bool,
}

/// Kleene iteration from `(0, 0)`, stopping when both coordinates move by at
/// most `tol`.
pub fn kleene_iterate(
    map: FixedPointMap,
    p: &StageParams,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    keep_trace: bool,
) -> FixedPointResult {
    let (mut x, mut y) = (0.0, 0.0);
    let mut trace = keep_trace.then(|| vec![(x, y)]);
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let (nx, ny) = map.apply(x, y, p, lambda);
        iterations += 1;
        if let Some(t) = trace.as_mut() {
            t.push((nx, ny));
        }
        let step = (nx - x).abs().max((ny - y).abs());
        x = nx;
        y = ny;
        if !x.is_finite() || !y.is_finite() || x > DIVERGENCE_BOUND || y > DIVERGENCE_BOUND {
            diverged = true;
            break;
        }
        if step <= tol {
            converged = true;
            break;
        }
    }
    FixedPointResult {
        theta_tilde: x,
        theta_companion: y,
        iterations,
        trace,
        converged,
        diverged,
    }
}

/// Fixed-length iterate sequence `map^n(0, 0)`, `n = 0..=steps`.
pub fn iterate_sequence(map: FixedPointMap, p: &StageParams, lambda: f64, steps: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(steps + 1);
    let (mut x, mut y) = (0.0, 0.0);
    out.push((x, y));
    for _ in 0..steps {
        (x, y) = map.apply(x, y, p, lambda);
        out.push((x, y));
    }
    out
}

fn require_contraction(p: &StageParams, lambda: f64) -> Result<(), StationaryError> {
    let alpha2 = p.alpha * p.alpha;
    if lambda > alpha2 {
        Ok(())
    } else {
        Err(StationaryError::LambdaTooSmall { lambda, alpha2 })
    }
}

pub fn solve_fixed_point(
    map: FixedPointMap,
    p: &StageParams,
    lambda: f64,
) -> Result<FixedPointResult, StationaryError> {
    require_contraction(p, lambda)?;
    let r = kleene_iterate(map, p, lambda, DEFAULT_TOL, DEFAULT_MAX_ITER, false);
    if r.converged {
        Ok(r)
    } else {
        Err(StationaryError::NotConverged(r.iterations))
    }
}

pub fn stationary_pure_profile(
    p: &StageParams,
    c: &AdversaryConstraints,
) -> Result<StrategyProfile, StationaryError> {
    if !(c.eps_lo == c.eps_hi && c.eps_hi != 0.0) {
        return Err(StationaryError::Bounds(format!(
            "pure stationary equilibrium needs eps_lo = eps_hi != 0 (got [{}, {}])",
            c.eps_lo, c.eps_hi
        )));
    }
    let fp = solve_fixed_point(FixedPointMap::L, p, c.lambda)?;
    let (lambda, eps) = (c.lambda, c.eps_hi);
    let g = feedback_gain(fp.theta_tilde, p);
    Ok(StrategyProfile {
        regime: RegimeClass::PureUnique,
        lambda,
        stages: vec![StageStrategy {
            agent: AgentRule::Affine {
                kappa: -g * (lambda - 1.0) / (lambda * eps),
                rho_gain: -g / lambda,
            },
            adversary: AdversaryRule::Saturating(CoefficientMixture::point(eps)),
            continuation: Some(ContinuationValue {
                mean_coef: fp.theta_tilde,
                var_coef: fp.theta_companion,
                constant: 0.0,
            }),
        }],
        stationary: true,
    })
}

pub fn stationary_behavioral_profile(
    p: &StageParams,
    c: &AdversaryConstraints,
) -> Result<StrategyProfile, StationaryError> {
    if !(c.eps_lo < 0.0 && c.eps_hi > 0.0) {
        return Err(StationaryError::Bounds(format!(
            "babbling stationary equilibrium needs eps_lo < 0 < eps_hi (got [{}, {}])",
            c.eps_lo, c.eps_hi
        )));
    }
    let fp = solve_fixed_point(FixedPointMap::J, p, c.lambda)?;
    let g = feedback_gain(fp.theta_tilde, p);
    Ok(StrategyProfile {
        regime: RegimeClass::BehavioralContinuum,
        lambda: c.lambda,
        stages: vec![StageStrategy {
            agent: AgentRule::Affine {
                kappa: 0.0,
                rho_gain: -g,
            },
            adversary: AdversaryRule::Saturating(CoefficientMixture::zero_mean_extremes(c.eps_lo, c.eps_hi)),
            continuation: Some(ContinuationValue {
                mean_coef: fp.theta_tilde,
                var_coef: fp.theta_companion,
                constant: 0.0,
            }),
        }],
        stationary: true,
    })
}

/// Steady-state expected reward per stage, `−θ̂ω²` or `−θ̌ω²`.
pub fn asymptotic_avg_reward(
    regime: StationaryRegime,
    p: &StageParams,
    lambda: f64,
) -> Result<f64, StationaryError> {
    let map = match regime {
        StationaryRegime::Pure => FixedPointMap::L,
        StationaryRegime::Behavioral => FixedPointMap::J,
    };
    let fp = solve_fixed_point(map, p, lambda)?;
    Ok(-fp.theta_companion * p.omega2)
}
