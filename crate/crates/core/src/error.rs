use std::path::PathBuf;

use thiserror::Error;

use crate::limits::LimitError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("storage error: {0}")]
    Storage(#[from] rusqlite::Error),

    #[error("store file is corrupt: {0}")]
    Corrupt(String),

    #[error("unknown schema version {found} (this build opens {known:?})")]
    SchemaVersion { found: i64, known: Vec<i64> },

    #[error("store not found at {0}")]
    StoreMissing(PathBuf),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{chunks} chunks but {vectors} vectors")]
    ArityMismatch { chunks: usize, vectors: usize },

    #[error("document has no chunks")]
    EmptyDocument,

    #[error("empty input")]
    EmptyInput,

    #[error("empty query")]
    EmptyQuery,

    #[error("store is empty")]
    EmptyStore,

    #[error("no embedding for text with digest {0}")]
    UnknownText(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("chunk {0} not found")]
    MissingChunk(i64),

    #[error("qrels reference unknown {kind} id {id:?}")]
    DanglingQrel { kind: &'static str, id: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Limit(#[from] LimitError),

    #[error("write aborted at barrier: {0}")]
    Aborted(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
