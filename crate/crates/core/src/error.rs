use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {id}: {message}")]
    Parse { id: String, message: String },

    #[error("embedding file line {line}: {message}")]
    EmbeddingFormat { line: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for {what} of size {size}")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("softmax row {row} has no unmasked entries")]
    FullyMasked { row: usize },

    #[error("backward already ran on this graph; build a fresh forward pass")]
    BackwardConsumed,

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sentence {id} has {len} tokens, exceeding the maximum length {max}")]
    TooLong { id: u64, len: usize, max: usize },

    #[error("checkpoint incompatible with model: {0}")]
    CheckpointMismatch(String),

    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
