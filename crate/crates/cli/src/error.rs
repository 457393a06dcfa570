use thiserror::Error;

/// Failures of a subcommand, grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config keys or values.
    #[error("usage error: {0}")]
    Usage(String),
    /// Missing or malformed inputs: gathers, manifests, checkpoints.
    #[error("data error: {0}")]
    Data(String),
    /// Training diverged or a computation left the finite range.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn data(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }
}

impl From<fbpick_seismic::Error> for CliError {
    fn from(e: fbpick_seismic::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<fbpick_core::Error> for CliError {
    fn from(e: fbpick_core::Error) -> Self {
        use fbpick_core::Error as E;
        match e {
            E::Numeric(_) => CliError::Numeric(e.to_string()),
            E::Usage(_) => CliError::Usage(e.to_string()),
            E::Dimension(_) | E::Format { .. } | E::Version(_) | E::Io(_) => CliError::Data(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
