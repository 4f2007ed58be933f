use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("dense application of {rows}x{cols} spreading grid exceeds cap {cap}")]
    SizeCap { rows: usize, cols: usize, cap: usize },

    #[error("operator is not Hilbert-Schmidt: {0}")]
    NotHilbertSchmidt(String),

    #[error("resolution: {0}")]
    Resolution(String),

    #[error("division floor: |g| = {value:.3e} < {floor:.3e} at x = {x}")]
    DivisionFloor { x: f64, value: f64, floor: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
