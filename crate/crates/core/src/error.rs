use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rank {rank}: must satisfy 1 <= rank <= {max}")]
    InvalidRank { rank: usize, max: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("basis columns are not orthonormal (deviation {deviation:.3e})")]
    InvalidBasis { deviation: f64 },

    #[error("wrong design: {0}")]
    WrongDesign(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
