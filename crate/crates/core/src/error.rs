use alloc::string::String;

/// Errors produced by the estimation library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    /// Rejection sampling gave up; carries the observed acceptance rate.
    #[error("acceptance rate {rate:.3e} after {attempts} attempts is too low")]
    LowAcceptance { rate: f64, attempts: usize },
    #[error("polyhedron is empty")]
    EmptyRegion,
    #[error("no-purchase probability {p0} is too close to one to estimate anything")]
    DegenerateCensoring { p0: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
