use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("attribute `{attr}`: {found} value cannot be compared with {expected} literal")]
    KindMismatch {
        attr: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("centroid predicate evaluated without a centroid assignment")]
    MissingCentroid,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("duplicate tuple id {0}")]
    DuplicateId(u64),
    #[error("attribute `{attr}` has mixed kinds ({first} and {second})")]
    Schema {
        attr: String,
        first: &'static str,
        second: &'static str,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("checksum mismatch for {0}")]
    Checksum(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
