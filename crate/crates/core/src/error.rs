use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value does not fit the field it is written into.
    #[error("range error: {0}")]
    Range(String),

    /// Sequence lengths, positions or shapes that violate a structural contract.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("capacity error: requested {requested} samples but only {available} are available ({what})")]
    Capacity {
        what: &'static str,
        requested: u128,
        available: u128,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss in batch sequence {index}")]
    NonFiniteLoss { index: usize },

    #[error("non-finite update in tensor `{tensor}`")]
    NonFiniteUpdate { tensor: String },

    #[error("training diverged at iteration {iteration}; last good checkpoint at {}", last_good.display())]
    Diverged { iteration: usize, last_good: PathBuf },

    #[error("checkpoint magic/version mismatch: {0}")]
    CheckpointVersion(String),

    #[error("checkpoint shape mismatch for tensor `{tensor}`: expected {expected:?}, found {found:?}")]
    CheckpointShape {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// Reserved: a decoded answer that is not a digit string. Unreachable with the digit vocabulary.
    #[error("undecodable model output: {0}")]
    Undecodable(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
