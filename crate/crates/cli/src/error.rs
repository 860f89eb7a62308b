use thiserror::Error;

/// Failure of a subcommand, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad job file, arguments or environment (exit 2).
    #[error("config error: {0}")]
    Config(String),
    /// Inputs that cannot be processed (exit 3).
    #[error("data error: {0}")]
    Data(#[from] lumen3d_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
