use thiserror::Error;

/// Errors raised across the library.
///
/// The CLI maps these onto exit codes: capacity errors exit with 3, usage and
/// parse errors with 2, everything else with 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("constraint is empty (constant +1): {0}")]
    EmptyConstraint(String),

    #[error("strategy is not oracularizable: {0}")]
    NotOracularizable(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(format!($($arg)*)))
    };
}
pub(crate) use bail;
