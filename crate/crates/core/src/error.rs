use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A kernel (or covariance) matrix could not be factorized, even after
    /// escalating the diagonal nugget.
    #[error("matrix is not numerically positive definite (last nugget tried: {nugget:e})")]
    Conditioning { nugget: f64 },

    /// The requested configuration is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Too few usable data points for a regression or fit.
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Hyper-parameter estimation failed for every start.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// A numerical failure not covered by the other variants.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A forward map evaluation failed.
    #[error("forward map failed: {0}")]
    Forward(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
