use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure of a fixed-point solve, with the last iterate kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceFailure {
    pub iterations: usize,
    pub last_change: f64,
    pub tolerance: f64,
    pub last_iterate: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undefined value: {0}")]
    UndefinedValue(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(
        "fixed-point iteration did not converge after {} iterations (last change {:e}, tolerance {:e})",
        .0.iterations, .0.last_change, .0.tolerance
    )]
    Convergence(Box<ConvergenceFailure>),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UndefinedValue(_) => "undefined_value",
            Error::Degenerate(_) => "degenerate_input",
            Error::Convergence(_) => "convergence",
            Error::InternalConsistency(_) => "internal_consistency",
        }
    }
}
