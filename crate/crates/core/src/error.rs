use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parse error at byte {offset}: {kind}")]
    Parse { offset: usize, kind: ParseErrorKind },

    #[error("input not sorted by time at index {index}")]
    Unsorted { index: usize },

    #[error("resource guard: {requested} electrons requested, limit is {limit}")]
    ResourceLimit { requested: f64, limit: f64 },

    #[error("fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    FitFailed { iterations: usize, residual: f64 },

    #[error("undefined estimator: {0}")]
    Undefined(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    BadMagic,
    Truncated,
    Unsorted,
    BadKind(u8),
    BadChannel(u8),
    BadCoordinate(u16),
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseErrorKind::BadMagic => write!(f, "bad magic header"),
            ParseErrorKind::Truncated => write!(f, "truncated record"),
            ParseErrorKind::Unsorted => write!(f, "record out of time order"),
            ParseErrorKind::BadKind(k) => write!(f, "unknown record kind {k}"),
            ParseErrorKind::BadChannel(c) => write!(f, "unknown photon channel {c}"),
            ParseErrorKind::BadCoordinate(c) => write!(f, "pixel coordinate {c} out of range"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
