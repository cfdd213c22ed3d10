use std::path::PathBuf;

/// Crate-wide error type. Variants map onto the CLI exit codes:
/// usage errors exit 1, runtime errors 2, training divergence 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate parameter name: {0}")]
    DuplicateParameter(String),

    #[error("unknown parameter name: {0}")]
    UnknownParameter(String),

    #[error("shape mismatch for parameter `{name}`: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("input too short: need at least {needed} samples/frames, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("unsupported audio format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("invalid token index {index}: {detail}")]
    InvalidToken { index: usize, detail: String },

    #[error("no valid CTC alignment: {frames} frames cannot emit a {label_len}-token label")]
    ImpossibleAlignment { frames: usize, label_len: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
