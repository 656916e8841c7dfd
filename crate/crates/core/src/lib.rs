//! Multi-label metric optimization.
//!
//! Trains per-label linear scorers to maximize linear-fractional metrics
//! (micro/macro/instance F1, Jaccard, precision, accuracy). A metric is turned
//! into a cost-sensitive multi-label loss through a fractional-programming
//! multiplier `lambda`; that loss is minimized through a comp-sum surrogate whose
//! sum over all `2^l` label configurations collapses to `O(l)` work.
//!
//! Modules:
//! - [`metrics`]: metric coefficient tables, presets, empirical and population values
//! - [`losses`]: the linearized target loss, the comp-sum surrogate (naive and factorized) and its gradient
//! - [`models`]: label vectors, linear scorers, tabular classifiers over finite supports
//! - [`data`]: the `.mlsvm` dataset format, `.dist` distributions, synthetic generators
//! - [`solver`]: mini-batch training and the four `lambda` selection strategies
//! - [`verify`]: brute-force oracles for the equivalence, sign, consistency and factorization properties

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod par;
pub mod rng;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
