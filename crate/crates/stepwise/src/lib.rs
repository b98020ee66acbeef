//! Stepsize selection and benchmarking for approximate value iteration.
//!
//! Approximate value iteration smooths a bootstrapped observation `v̂` into a
//! running approximation `v̄` with a stepsize `α`:
//!
//! ```text
//! v̄ⁿ = (1 − αₙ₋₁) v̄ⁿ⁻¹ + αₙ₋₁ v̂ⁿ
//! ```
//!
//! The stepsize controls a bias/variance tradeoff — large `α` tracks new
//! rewards quickly but retains noise — and the right choice depends on how
//! strongly `v̂` bootstraps on the previous approximation. This crate
//! provides:
//!
//! - [`rules`]: the deterministic and adaptive stepsize rules compared by the
//!   benchmark labs (`1/n`, constant, polynomial, harmonic, McClain,
//!   bias-adjusted Kalman filter, IDBD, and the error-minimizing rule).
//! - [`osavi`]: exact mean/variance recursions for the smoothed estimate and
//!   the closed-form stepsize that minimizes the one-step prediction error,
//!   with plug-in reward statistics for the unknown-parameter case.
//! - [`osavi_finite`]: the finite-horizon extension with a per-period mean
//!   vector and a full covariance-multiplier matrix.
//! - [`bounds`]: analytic envelopes quantifying how slowly the `1/n` rule
//!   converges, and iteration counts needed to reach a fraction of the limit.
//! - [`single_state`]: the single-estimate benchmark harness with a
//!   cross-replication prediction-error objective.
//! - [`mdp`]: synthetic tabular MDPs, exact solvers, and off-policy training
//!   loops (infinite and finite horizon) with per-entry stepsize state.
//! - [`inventory`]: a continuous-price inventory problem solved with a
//!   post-decision-state lookup table.
//!
//! All experiment entry points are deterministic given a seed: randomness is
//! drawn from per-stream counter-based generators (see [`rng`]), so
//! replications and sample paths can run in parallel and still reproduce
//! byte-identical output.

pub mod bounds;
pub mod error;
pub mod inventory;
pub mod mdp;
pub mod osavi;
pub mod osavi_finite;
pub mod report;
pub mod rng;
pub mod rules;
pub mod single_state;

pub use error::{Error, Result};
