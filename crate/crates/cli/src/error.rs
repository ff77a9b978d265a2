use std::path::PathBuf;

use thiserror::Error;

/// Process exit status for a successful command.
pub const EXIT_OK: i32 = 0;
/// Invalid input, or a validation run that found failures.
pub const EXIT_VALIDATION: i32 = 1;
/// Anything that went wrong while running a valid command.
pub const EXIT_RUNTIME: i32 = 2;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] aoi_core::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        use aoi_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Parse { .. } => EXIT_VALIDATION,
            CliError::Core(
                E::InvalidParameter { .. } | E::DegenerateGrid(_) | E::Infeasible { .. },
            ) => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    }
}
