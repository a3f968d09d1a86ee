//! Scalar LQG machinery: the cost-to-go recursion, the optimal affine control
//! for a known observation channel, and the Gaussian belief update.

use serde::{Deserialize, Serialize};

use crate::model::{AdversaryAction, AgentAction, Belief, ModelParams, StageParams};

/// Cost-to-go curvatures `θ̃_1 … θ̃_{N+1}` (zero-based here), with the
/// terminal entry fixed at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaTildeLadder(pub Vec<f64>);

impl ThetaTildeLadder {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// Ratio `θ̃αβ/(φ + θ̃β²)` shared by every control law in the game. The
/// certainty-equivalent LQR action is `−gain · E[s]`.
pub fn feedback_gain(theta_tilde_next: f64, p: &StageParams) -> f64 {
    theta_tilde_next * p.alpha * p.beta / (p.phi + theta_tilde_next * p.beta * p.beta)
}

/// One backward step of the Riccati-type recursion.
pub fn theta_tilde_step(theta_tilde_next: f64, p: &StageParams) -> f64 {
    let t = theta_tilde_next;
    let a2 = p.alpha * p.alpha;
    let b2 = p.beta * p.beta;
    p.theta + t * a2 - t * t * a2 * b2 / (p.phi + t * b2)
}

pub fn theta_tilde_ladder(params: &ModelParams) -> ThetaTildeLadder {
    let n = params.horizon;
    let mut out = vec![0.0; n + 1];
    for i in (0..n).rev() {
        out[i] = theta_tilde_step(out[i + 1], params.stage(i));
    }
    ThetaTildeLadder(out)
}

/// Weight `π²σ²/(π²σ² + δ²)` the posterior puts on the observation.
pub fn observation_weight(belief: &Belief, channel: &AdversaryAction) -> f64 {
    let signal = channel.pi * channel.pi * belief.sigma2;
    signal / (signal + channel.delta2)
}

/// Best affine response `(κ, ρ)` to a known channel.
pub fn lqg_gain(
    belief: &Belief,
    channel: &AdversaryAction,
    theta_tilde_next: f64,
    p: &StageParams,
) -> AgentAction {
    let g = feedback_gain(theta_tilde_next, p);
    if g == 0.0 {
        return AgentAction::new(0.0, 0.0);
    }
    let w = observation_weight(belief, channel);
    let denom = channel.pi * channel.pi * belief.sigma2 + channel.delta2;
    let kappa = -g * channel.pi * belief.sigma2 / denom;
    let rho = -g * belief.mu * (1.0 - w);
    AgentAction::new(kappa, rho)
}

/// Posterior mean of the state after seeing `ŝ`, written in gain form
/// `μ + k(ŝ − πμ)` with `k = πσ²/(π²σ² + δ²)` so a vanishing `δ²` does not
/// cancel catastrophically.
pub fn posterior_after_obs(belief: &Belief, channel: &AdversaryAction, s_hat: f64) -> f64 {
    let denom = channel.pi * channel.pi * belief.sigma2 + channel.delta2;
    let k = channel.pi * belief.sigma2 / denom;
    belief.mu + k * (s_hat - channel.pi * belief.mu)
}

/// Posterior variance of the current state after the observation.
pub fn posterior_variance(belief: &Belief, channel: &AdversaryAction) -> f64 {
    belief.sigma2 * (1.0 - observation_weight(belief, channel))
}

/// Belief about the next state once `(π, δ²)` is revealed and `a` is played.
pub fn belief_update(
    belief: &Belief,
    channel: &AdversaryAction,
    s_hat: f64,
    a: f64,
    p: &StageParams,
) -> Belief {
    let mean = posterior_after_obs(belief, channel, s_hat);
    let var = posterior_variance(belief, channel);
    Belief::new(p.alpha * mean + p.beta * a, p.alpha * p.alpha * var + p.omega2)
}
