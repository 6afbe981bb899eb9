use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: bad field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("appearance unavailable: {0}")]
    AppearanceUnavailable(String),

    #[error("frames must be processed in order: expected frame {expected}, got {got}")]
    FrameOrder { expected: u32, got: u32 },

    #[error(
        "fixed-pair global assignment needs equal counts ({detections} detections vs {targets} targets); use heuristic_search instead"
    )]
    CardinalityMismatch { detections: usize, targets: usize },

    #[error("instance too large for brute force: min dimension {0} exceeds {1}")]
    InstanceTooLarge(usize, usize),

    #[error("not evaluable: {0}")]
    NotEvaluable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
