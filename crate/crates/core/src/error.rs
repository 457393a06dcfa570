use thiserror::Error;

/// Errors raised by the tensor engine and the network built on it.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes that do not fit together.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// An API used out of contract (e.g. optimizer step without gradients).
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed checkpoint bytes.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    /// Checkpoint written by an incompatible format or model layout.
    #[error("version error: {0}")]
    Version(String),
    /// A loss or activation left the finite range.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
