//! Additive kernel ridge regression with elementary-symmetric-polynomial kernels.
//!
//! The estimator restricts kernel ridge regression to functions that decompose
//! into a sum of components, each depending on at most `d` of the `D` input
//! coordinates. The sum over all `C(D, d)` product kernels collapses into the
//! `d`-th elementary symmetric polynomial of the one-dimensional kernel values,
//! which the Girard–Newton recurrence evaluates in `O(D d²)` per pair.
//!
//! Modules:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`linalg`] | dense Cholesky solves and symmetric eigendecomposition |
//! | [`kernels`] | base Gaussian kernels, ESP kernels, kernel matrices |
//! | [`salsa`] | the estimator: normalization, bandwidths, fit, predict |
//! | [`modelselect`] | k-fold CV over λ and the incremental search over `d` |
//! | [`synthetic`] | bump-function and function-selection generators |
//! | [`theory`] | effective dimensionality and rate diagnostics |
//! | [`shrink`] | group-lasso solvers for the sparse additive variant |
//! | [`data`] | CSV ingestion, normalization statistics, splits |
//! | [`persist`] | versioned model document |
//! | [`par`] | parallel/sequential execution switch |

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod modelselect;
pub mod par;
pub mod persist;
pub mod salsa;
pub mod shrink;
pub mod synthetic;
pub mod theory;

pub use error::{Error, Result};
pub use kernels::{EspKernelSpec, KernelVariant};
pub use linalg::{CholeskyFactor, DenseMatrix, JitterPolicy, SymmetricEigen};
pub use par::Parallelism;
pub use salsa::{FittedSalsa, NormalizationStats, SalsaConfig};
