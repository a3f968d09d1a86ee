//! Solver, simulator and verifier for the adversarial LQG cheap-talk game.
//!
//! An adversary reports a manipulated observation `ŝ = πs + c` of a scalar
//! linear-Gaussian state to a controlling agent, subject to a bound on how
//! uninformative the report may be. The crate computes the subgame perfect
//! equilibria in closed form, simulates any strategy profile, and certifies
//! equilibria by one-shot deviation search.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod equilibrium;
pub mod lqg;
pub mod model;
pub mod sim;
pub mod stationary;
pub mod verify;
