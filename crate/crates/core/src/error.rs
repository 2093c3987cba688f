use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("k = {k} must be smaller than the number of candidates ({n})")]
    KTooLarge { k: usize, n: usize },

    #[error("unknown id {0}")]
    UnknownId(u64),

    #[error("subject has no neighbors")]
    NoNeighbors,

    #[error("ground-truth sidecar is required for scheme {0}")]
    MissingSidecar(String),

    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("parse error at byte offset {offset} (line {line}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        message: String,
    },

    #[error("unsupported {format} file version {found} (expected {expected})")]
    VersionMismatch { format: String, expected: u32, found: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
