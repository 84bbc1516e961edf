use thiserror::Error;

/// Errors raised by the library and the CLI.
#[derive(Debug, Error)]
pub enum SensError {
    /// A caller supplied an out-of-range or inconsistent parameter.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Region classification could not be completed (missing neighbor data).
    #[error("classification error: {0}")]
    Classification(String),

    /// A structural invariant of a constructed object did not hold.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// An experiment could not produce a meaningful result.
    #[error("experiment aborted: {0}")]
    Abort(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SensError>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(SensError::Parameter(msg.into()))
}
