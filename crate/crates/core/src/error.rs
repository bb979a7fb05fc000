use thiserror::Error;

/// Errors raised by the Private Evolution library.
#[derive(Debug, Error)]
pub enum PeError {
    #[error("no samples")]
    NoSamples,

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}{}", .row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        found: usize,
        row: Option<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("exact solver size cap exceeded: {size} > {cap} (raise the cap explicitly to override)")]
    SizeCap { size: usize, cap: usize },

    #[error("unknown variation degree: {0}")]
    UnknownDegree(String),

    #[error("operation not supported by this backend: {0}")]
    Unsupported(&'static str),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("bisection bracket exhausted: {0}")]
    Bracket(String),

    #[error("empty class `{0}`")]
    EmptyClass(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PeError>;
