//! Estimation of fixed-effects models with unknown monotone outcome
//! transformations.
//!
//! Outcomes follow `Y_t = h_t(alpha + X_t - U_t)` for two periods. The
//! inverse transformations `g_t = h_t^-1` are approximated by a Bernstein
//! sieve whose coefficients may vary linearly with standardized covariates,
//! and estimated by GMM on first-differenced moments under shape constraints.

pub mod bernstein;
pub mod binarize;
pub mod bootstrap;
pub mod error;
pub mod fe_summary;
pub mod panel;
pub mod par;
pub mod pipeline;
pub mod qp;
pub mod sieve_gmm;
pub mod stats;
pub mod synth;

pub use error::{FeltError, Result};
