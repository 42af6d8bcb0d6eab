use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::emulate::Calibration;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),

    #[error("orientation undefined: {0}")]
    UndefinedOrientation(&'static str),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("composition failed after {attempts} attempts: {reason}")]
    Composition { attempts: usize, reason: String },

    #[error("expected exactly 2 instances, found {0}")]
    Arity(usize),

    #[error("configuration error: {0}")]
    Config(String),

    /// Carries the best profile found so the caller can still inspect it.
    #[error("calibration did not reach targets; best achieved {}", .best.achieved)]
    Calibration { best: Box<Calibration> },

    #[error("{}: {message} (byte offset {offset})", .path.display())]
    Data {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// Process exit code: 1 for usage/configuration problems, 2 for data and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => 1,
            _ => 2,
        }
    }
}
