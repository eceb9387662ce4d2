//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("{what} out of range: {details}")]
    OutOfRange { what: String, details: String },

    #[error("{0}")]
    Invalid(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("logging-policy parameters required but absent from the dataset")]
    MissingLogger,

    #[error("operation requires grouped (multiple-interactions) data")]
    RequiresGroups,

    #[error("operation requires i.i.d. (ungrouped) records")]
    RequiresIid,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("optimization diverged at epoch {epoch} (loss {value})")]
    Diverged { epoch: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn range(what: impl Into<String>, details: impl Into<String>) -> Self {
        Error::OutOfRange {
            what: what.into(),
            details: details.into(),
        }
    }
}
