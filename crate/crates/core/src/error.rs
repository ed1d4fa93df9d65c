use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{path}: row {row}, column '{column}': {message}")]
    Cell {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("only one class present ({0})")]
    SingleClass(u8),

    #[error("class {class} has {count} objects, too few to stratify into {parts}")]
    ClassTooSmall {
        class: u8,
        count: usize,
        parts: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid hyperparameter '{key}' for {family}: {message}")]
    InvalidHyperparameter {
        family: String,
        key: String,
        message: String,
    },

    #[error("non-finite value during {0}")]
    NonFinite(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
