use thiserror::Error;

/// Errors raised across the design pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user input or configuration.
    #[error("validation error: {0}")]
    Validation(String),

    /// A frequency maps outside the valid `asin` domain of the angle map.
    #[error("frequency {freq_hz} Hz is out of band (mapping argument {argument})")]
    OutOfBand { freq_hz: f64, argument: f64 },

    /// A matrix that must be inverted is singular or numerically so.
    #[error("singular matrix in {context} (condition estimate {condition:e})")]
    Singular { context: String, condition: f64 },

    /// Root finding failed to bracket the requested level.
    #[error("root not bracketed: {0}")]
    RootNotBracketed(String),

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// A synthesized load has non-physical component values.
    #[error("element {element} is not realizable: {reason}")]
    NonRealizable { element: usize, reason: String },

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } | Error::OutOfBand { .. } => 2,
            Error::NonRealizable { .. } => 4,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
