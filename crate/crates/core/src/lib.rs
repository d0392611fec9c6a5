//! Hierarchical Gaussian process regression with estimated hyper-parameters.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: Matérn and separable Matérn covariances, kernel matrices.
//! - [`designs`]: design point sets and their fill distance / separation radius.
//! - [`regression`]: the GP predictive mean, covariance and process samples.
//! - [`hyperfit`]: marginal likelihood and empirical-Bayes point estimation.
//! - [`testbed`]: test functions of prescribed Sobolev smoothness.
//! - [`convergence`]: N-sweeps, empirical rates and predicted rate exponents.
//! - [`inverse`]: Bayesian inverse problems with GP-surrogate likelihoods.

pub mod convergence;
pub mod designs;
pub mod error;
pub mod hyperfit;
pub mod inverse;
pub mod kernels;
pub mod regression;
pub mod rng;
pub mod testbed;

pub use error::{Error, Result};
