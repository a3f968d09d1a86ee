//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the solver; every value is recomputed from the
//! model primitives so that agreement is evidence rather than tautology.

#![allow(dead_code)]

use alqg::model::{AdversaryAction, AgentAction, Belief, StageParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Positive root of `β²x² − (θβ² + φα² − φ)x − θφ = 0`, the stationary
/// cost-to-go curvature.
pub fn riccati_root(p: &StageParams) -> f64 {
    let a = p.beta * p.beta;
    let b = p.theta * a + p.phi * p.alpha * p.alpha - p.phi;
    let c = p.theta * p.phi;
    // 2c / (√(b² + 4ac) − b) avoids cancellation when b > 0
    let disc = (b * b + 4.0 * a * c).sqrt();
    if b > 0.0 {
        (b + disc) / (2.0 * a)
    } else {
        2.0 * c / (disc - b)
    }
}

/// Stationary variance coefficients `(θ̂, θ̌)` from the linear second
/// components of the maps at their fixed points.
pub fn stationary_companions(p: &StageParams, lambda: f64) -> (f64, f64) {
    let t = riccati_root(p);
    let a2 = p.alpha * p.alpha;
    let keep = (lambda - 1.0) / lambda;
    let hat = (p.theta + (t - p.theta) * keep) / (1.0 - a2 / lambda);
    let check = (p.theta + a2 * t * keep) / (1.0 - a2 / lambda);
    (hat, check)
}

/// Stage parameters drawn from a range where every quantity is O(1).
pub fn random_stage<R: Rng>(r: &mut R) -> StageParams {
    let sign = |r: &mut R| if r.gen::<bool>() { 1.0 } else { -1.0 };
    StageParams {
        alpha: sign(r) * r.gen_range(0.2..1.2),
        beta: sign(r) * r.gen_range(0.3..2.0),
        omega2: r.gen_range(0.2..2.0),
        theta: r.gen_range(0.2..4.0),
        phi: r.gen_range(0.2..4.0),
    }
}

/// Monte Carlo estimate of one stage of play: realized reward plus a
/// quadratic continuation `−A μ'² − B σ'² − C` at the Bayesian posterior.
/// Returns `(mean, stderr)`.
#[allow(clippy::too_many_arguments)]
pub fn one_stage_monte_carlo(
    p: &StageParams,
    cont: (f64, f64, f64),
    b: &Belief,
    adv: &AdversaryAction,
    agent: &AgentAction,
    n: usize,
    seed: u64,
) -> (f64, f64) {
    let mut r = rng(seed);
    let (a_coef, b_coef, c_coef) = cont;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..n {
        let s = b.mu + b.sigma2.sqrt() * normal(&mut r);
        let s_hat = adv.pi * s + adv.delta2.sqrt() * normal(&mut r);
        let a = agent.kappa * s_hat + agent.rho;
        let reward = -p.theta * s * s - p.phi * a * a;
        // posterior by completing the square, written independently of the
        // library's gain form
        let prec = 1.0 / b.sigma2
            + if adv.delta2 > 0.0 {
                adv.pi * adv.pi / adv.delta2
            } else {
                f64::INFINITY
            };
        let (post_mean, post_var) = if prec.is_infinite() {
            (s_hat / adv.pi, 0.0)
        } else {
            let v = 1.0 / prec;
            (v * (b.mu / b.sigma2 + adv.pi * s_hat / adv.delta2), v)
        };
        let mu_next = p.alpha * post_mean + p.beta * a;
        let var_next = p.alpha * p.alpha * post_var + p.omega2;
        let x = reward - a_coef * mu_next * mu_next - b_coef * var_next - c_coef;
        sum += x;
        sum2 += x * x;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum2 / nf - mean * mean) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Polar-method standard normal, deliberately a different algorithm from the
/// simulator's.
pub fn normal<R: Rng>(r: &mut R) -> f64 {
    loop {
        let u: f64 = r.gen_range(-1.0..1.0);
        let v: f64 = r.gen_range(-1.0..1.0);
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Two-stage value written out directly from
/// the model: stage 1 reward plus `−θ₂(μ₂² + σ₂²)` at the stage-2 belief,
/// averaged over the mixture with the agent action held fixed.
pub fn two_stage_direct(
    p1: &StageParams,
    theta2: f64,
    b: &Belief,
    support: &[(AdversaryAction, f64)],
    agent: &AgentAction,
) -> f64 {
    support
        .iter()
        .map(|(adv, prob)| {
            let d = adv.pi * adv.pi * b.sigma2 + adv.delta2;
            let u = agent.kappa * adv.pi * b.mu + agent.rho;
            let e_s2 = b.mu * b.mu + b.sigma2;
            let e_a2 = u * u + agent.kappa * agent.kappa * d;
            // E[μ₂] and Var[μ₂] over the observation
            let k_post = adv.pi * b.sigma2 / d;
            let m2 = p1.alpha * b.mu + p1.beta * u;
            let slope = p1.alpha * k_post + p1.beta * agent.kappa;
            let e_mu2_sq = m2 * m2 + slope * slope * d;
            let var2 = p1.alpha * p1.alpha * b.sigma2 * (1.0 - adv.pi * k_post) + p1.omega2;
            prob * (-p1.theta * e_s2 - p1.phi * e_a2 - theta2 * (e_mu2_sq + var2))
        })
        .sum()
}
