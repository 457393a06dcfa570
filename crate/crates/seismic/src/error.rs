use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed gather file.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    /// Input outside an operation's contract.
    #[error("validation error: {0}")]
    Validation(String),
    /// Line fit impossible from the given points.
    #[error("estimation error: {0}")]
    Estimation(String),
    /// No threshold reaches the requested picking rate.
    #[error("calibration error: target APR {target} unreachable, at most {max_achievable} achievable")]
    Calibration { target: f64, max_achievable: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
