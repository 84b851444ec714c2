use thiserror::Error;

/// Errors produced by the dynamics lab.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A constructed object failed a numerical invariant at a specific location.
    #[error("validation failed at {point}: {reason}")]
    Validation { point: String, reason: String },

    /// Instance lies outside the class of inputs that can be handled constructively.
    #[error("unsupported instance: {0}")]
    Unsupported(String),

    /// A tolerance-dependent decision could not be made.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    /// A truncated series or iteration did not meet its accuracy target.
    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
