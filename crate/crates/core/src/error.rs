use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A shape, index or probability invariant was violated.
    #[error("structural error: {0}")]
    Structure(String),
    /// A loss estimate would divide by zero (`u + gamma == 0`).
    #[error("zero estimator denominator at state {state}, action {action}")]
    ZeroDenominator { state: usize, action: usize },
    /// The dual solver of the KL projection did not reach the tolerance.
    #[error("projection did not converge after {iterations} iterations (max violation {violation:e})")]
    ProjectionFailed { iterations: usize, violation: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn structure(msg: impl Into<String>) -> Error {
    Error::Structure(msg.into())
}
