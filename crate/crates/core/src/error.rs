use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("cutoff {cutoff} too small: tail mass {tail_mass:.3e} exceeds tolerance {tolerance:.1e}")]
    Truncation {
        cutoff: usize,
        tail_mass: f64,
        tolerance: f64,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("zero visibility: {0}")]
    ZeroVisibility(String),
    #[error("posterior carries no phase information (|a_-1| ~ 0)")]
    NoInformation,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("integrator did not converge: {0}")]
    NotConverged(String),
}

impl Error {
    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::DimensionMismatch { .. })
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = core::result::Result<T, Error>;
