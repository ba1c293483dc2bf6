use thiserror::Error;

pub type Result<T> = std::result::Result<T, LectError>;

#[derive(Debug, Error)]
pub enum LectError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("encoding failed at node {node}: {reason}")]
    Encode { node: usize, reason: String },

    #[error("generation failed for pseudo node {node}: {reason}")]
    Generate { node: usize, reason: String },

    #[error("remote request failed: {0}")]
    Remote(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Other(String),
}
