//! Experiment harness: configuration, sweeps, on-disk formats and reports.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
pub mod report;

use std::path::{Path, PathBuf};

pub use commands::{run_command, Command, RunOptions};
pub use config::{load_config, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::MissingInput(_) => 4,
        }
    }

    /// Prefix the message with the artifact it concerns.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            CliError::MissingInput(m) => CliError::MissingInput(format!("{what}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
        }
    }
}

impl From<hopperlab_core::Error> for CliError {
    fn from(e: hopperlab_core::Error) -> Self {
        match e {
            hopperlab_core::Error::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Output directory: `HOPPERLAB_OUT`, then `--out`, then the config, then
/// `hopperlab_out` in the working directory.
pub fn resolve_out_dir(cli: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(env) = std::env::var_os("HOPPERLAB_OUT").filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    cli.map(Path::to_path_buf)
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("hopperlab_out"))
}
