use std::path::PathBuf;

use crate::decode::SearchStats;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid annotation: {0}")]
    Annotation(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("not enough records: need at least {needed}, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("scorer is untrained")]
    Untrained,

    #[error("operation not supported by the {0} scorer")]
    Unsupported(&'static str),

    #[error("token id {id} out of range for vocabulary of {size}")]
    TokenRange { id: u32, size: usize },

    #[error("scorer file format error: {0}")]
    Format(String),

    #[error("scorer kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("search exhausted its step budget without completing a hypothesis")]
    SearchExhausted { stats: SearchStats },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
