use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] pnc_core::Error),

    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const OUTPUT: i32 = 1;
    pub const INVALID_CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::INVALID_CONFIG,
            CliError::Core(e) if e.is_input_error() => exit::INVALID_CONFIG,
            CliError::Core(_) => exit::NUMERICAL,
            CliError::Output { .. } => exit::OUTPUT,
        }
    }
}
