use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GenboError>;

#[derive(Debug, Error)]
pub enum GenboError {
    #[error("fingerprint length mismatch: {left} vs {right} bits")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid hex fingerprint {0:?}")]
    InvalidHex(String),

    #[error("missing cell ({x_id}, {w_id})")]
    MissingCell { x_id: String, w_id: String },

    #[error("inconsistent fingerprint for id {0:?}")]
    InconsistentFingerprint(String),

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("unknown id {0:?}")]
    UnknownId(String),

    #[error("non-finite value {value} at ({x_id}, {w_id})")]
    NonFinite { x_id: String, w_id: String, value: f64 },

    #[error("train and test tasks overlap on {0:?}")]
    OverlappingTasks(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("cholesky factorization failed after jitter {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("aggregation expects {expected} task columns, got {got}")]
    ColumnMismatch { expected: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GenboError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GenboError::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GenboError::InvalidArgument(msg.into())
    }
}
