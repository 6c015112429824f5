//! Unified Shapley-value estimation.
//!
//! Shapley values are the unique efficient, symmetric, additive attribution of
//! `v([d]) − v(∅)` across `d` players of a cooperative game `v`. This crate
//! treats their computation as a constrained weighted least-squares problem and
//! provides:
//!
//! - [`combinatorics`]: overflow-safe kernel weights, binomials, and the
//!   implicit orthonormal basis `Q` of the sum-free subspace.
//! - [`games`]: the batched value-function contract and concrete games
//!   (tabular, masked model, anonymous adversarial, external subprocess).
//! - [`exact`]: ground-truth oracles (brute force, full regression, and a
//!   Lagrangian solver as an independent cross-check).
//! - [`sampling`]: the τ-interpolated family of subset distributions and
//!   paired sketch constructors with and without replacement.
//! - [`estimators`]: the sketched regression and matrix-vector estimators,
//!   presets for published baselines, and a practical error proxy.
//! - [`diagnostics`]: the γ/η quantities that predict estimator error,
//!   sample-complexity bounds, analytic adversarial separations, and
//!   insertion/deletion faithfulness metrics.
//!
//! All probability and weight computations run in log space so dimensions in
//! the thousands never materialize an overflowing binomial coefficient.

pub mod combinatorics;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod games;
pub mod sampling;

pub use error::{Error, Result};
