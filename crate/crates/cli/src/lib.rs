//! Configuration, orchestration and artifact output for the `micromag`
//! command-line tool.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

pub use checks::{run_check_suite, CheckItem, CheckReport, Status};
pub use commands::{run, Command, Outcome, RunReport};
pub use config::{parse_config, serialize_config, ConfigErrors, InitialState, RunConfig, Tolerances};

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code when a computation ran but failed (non-convergence, failed checks).
pub const EXIT_FAILURE: i32 = 1;
/// Exit code for configuration and input errors.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigErrors),
    Core(micromag_core::Error),
    Io(std::io::Error),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "invalid configuration:\n{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<micromag_core::Error> for CliError {
    fn from(e: micromag_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<ConfigErrors> for CliError {
    fn from(e: ConfigErrors) -> Self {
        CliError::Config(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use micromag_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                E::Config(_)
                | E::Usage(_)
                | E::Shape(_)
                | E::GridMismatch { .. }
                | E::Snapshot(_)
                | E::Io(_)
                | E::TooLarge { .. }
                | E::Unstable { .. } => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            },
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }
}

/// Reads and parses a config file.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_config(&text)?)
}
