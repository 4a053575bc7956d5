use std::path::PathBuf;

use spinsq_core::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: config, schedule, checkpoint or command-line values.
    #[error("{0}")]
    Validation(String),
    /// Numerical or I/O failure while running a valid request.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub(crate) fn read(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Validation(format!("cannot read {}: {e}", path.display()))
    }

    pub(crate) fn write(path: PathBuf, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::ZeroAtoms
            | CoreError::DimensionMismatch { .. }
            | CoreError::InvalidArgument(_)
            | CoreError::TooLarge { .. }
            | CoreError::ShapeMismatch(_)
            | CoreError::Config { .. }
            | CoreError::Checkpoint(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
