//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model fitting, prediction, drivers, and evaluators.
#[derive(Debug, Error)]
pub enum MfboError {
    /// An argument violated a precondition (dimension mismatch, bad bounds, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Hyperparameter training could not produce a usable model.
    #[error("training failure: {0}")]
    TrainingFailure(String),

    /// The covariance matrix stayed non-positive-definite after jitter escalation.
    #[error("covariance not positive definite after jitter escalation (max jitter {max_jitter:e})")]
    NotPositiveDefinite { max_jitter: f64 },

    /// An objective-function evaluation failed (external solver, protocol, timeout).
    #[error("evaluation failure: {0}")]
    EvalFailure(String),

    /// An optimization driver could not continue.
    #[error("driver failure: {0}")]
    DriverFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MfboError>;

impl MfboError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MfboError::InvalidInput(msg.into())
    }
}
