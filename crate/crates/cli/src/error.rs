//! Command-level errors and their process exit codes.

use std::path::PathBuf;

use edglm_core::Error;

/// Exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for data errors.
pub const EXIT_DATA: i32 = 3;
/// Exit code for numerical failures.
pub const EXIT_NUMERIC: i32 = 4;
/// Exit code for output I/O failures.
pub const EXIT_IO: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Output { .. } => EXIT_IO,
            CliError::Model(e) => model_exit_code(e),
        }
    }
}

fn model_exit_code(e: &Error) -> i32 {
    let stepped = matches!(e, Error::Step { .. });
    match e.root() {
        Error::Config(_) | Error::Structural(_) | Error::Horizon(_) => EXIT_CONFIG,
        Error::Domain { .. } if !stepped => EXIT_CONFIG,
        Error::Data(_) | Error::Support { .. } => EXIT_DATA,
        _ => EXIT_NUMERIC,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
