use std::io;

use thiserror::Error;

pub type Result<T, E = FairKnnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FairKnnError {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid record {id}: {reason}")]
    Record { id: u64, reason: String },

    #[error("invalid fairness spec: {0}")]
    Spec(String),

    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,

    #[error("bitmap layout needs {bits} bits, the limit is 64")]
    LayoutTooWide { bits: u32 },

    #[error("value index {value} out of range for attribute {attr} (domain size {size})")]
    ValueOutOfDomain { attr: usize, value: u32, size: usize },

    #[error("malformed bitmap {bits:#b}: field {attr} holds code {code}, domain size {size}")]
    MalformedBitmap {
        bits: u64,
        attr: usize,
        code: u64,
        size: usize,
    },

    #[error("invalid LSH parameters: {0}")]
    LshParams(String),

    #[error("distance {0} has no LSH family")]
    UnsupportedFamily(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("query generation failed: {0}")]
    QueryGen(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
