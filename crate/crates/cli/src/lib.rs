//! Scenario files and the subcommands behind the `cpvbench` binary.

pub mod commands;
pub mod scenario;

use thiserror::Error;

/// Failure of a subcommand, split by the exit status it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or unparsable input; exit status 2.
    #[error("{0}")]
    Config(String),
    /// Runtime or data failure; exit status 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<cpvbench::campaign::CampaignError> for CliError {
    fn from(e: cpvbench::campaign::CampaignError) -> Self {
        use cpvbench::campaign::CampaignError as E;
        match e {
            E::Csv(ref c) if c.is_io_error() => CliError::Runtime(e.to_string()),
            E::Config(_) | E::UnknownSubModule(_) | E::Parse { .. } | E::Csv(_) => CliError::Config(e.to_string()),
            E::NoWeather | E::Io(_) | E::Meter(_) => CliError::Runtime(e.to_string()),
        }
    }
}

pub(crate) fn io_error(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
