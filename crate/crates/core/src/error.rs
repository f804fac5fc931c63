use thiserror::Error;

/// Errors raised by model construction, inference, fitting and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid observation at index {index}: {reason}")]
    InvalidObservation { index: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("impossible evidence: all forward probabilities vanish at index {index}")]
    ImpossibleEvidence { index: usize },

    #[error("impossible leave-one-out evidence at index {index}")]
    ImpossibleLooEvidence { index: usize },

    #[error("EM degenerate in all {restarts} restarts (a state lost all posterior weight)")]
    EmDegenerate { restarts: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for failures of the numerical pipeline rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::ImpossibleEvidence { .. }
                | Error::ImpossibleLooEvidence { .. }
                | Error::EmDegenerate { .. }
        )
    }
}
