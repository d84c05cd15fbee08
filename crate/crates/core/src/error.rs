use thiserror::Error;

/// Errors produced by grid operations, solvers and estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a mathematical precondition (wrong sign, missing
    /// boundary zeros, value out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Two grid objects that must share a grid size do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Iterative solver ran out of iterations.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    /// Malformed serialized input (CSV, config strings).
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
