use std::path::PathBuf;

/// Errors raised anywhere in the benchmark pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{context}: non-finite value encountered")]
    NonFinite { context: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("embedding table: {0}")]
    Embedding(String),

    #[error("item `{0}` is not covered by the embedding table")]
    UncoveredItem(String),

    #[error("split boundary {boundary} lies outside the log time range [{min}, {max}]")]
    BoundaryOutOfRange { boundary: i64, min: i64, max: i64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("capability: {0}")]
    Capability(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
