use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpvbench_cli::scenario::{Scenario, SEED_ENV};
use cpvbench_cli::{commands, CliError};

/// Outdoor CPV test-rig simulator and characterization pipeline.
#[derive(Debug, Parser)]
#[command(name = "cpvbench", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the measurement campaign and acceptance sessions of a scenario.
    Simulate {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Replace the scenario seed.
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
    },
    /// Filter a measurement log and rate each sub-module at CSOC.
    Rate {
        /// Measurement log (CSV) written by `simulate`.
        log: PathBuf,
        /// Scenario the log was taken with.
        #[arg(short, long)]
        scenario: PathBuf,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Sub-modules rated in parallel.
        #[arg(short, long, default_value_t = 1)]
        jobs: usize,
        /// Append the published-row arithmetic check to the report.
        #[arg(long)]
        table2_check: bool,
        /// Replace the scenario seed (regenerates synthetic weather).
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
    },
    /// Extract the acceptance angle and 90% contour from mapping sessions.
    Acceptance {
        /// Session files (CSV), one per mapping session.
        #[arg(required = true)]
        sessions: Vec<PathBuf>,
        /// Sun elevation of each session; one value applies to all.
        #[arg(short, long = "elevation-deg", default_value = "0")]
        elevation_deg: Vec<f64>,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Print effective concentration, CTM and efficiency of the published rows.
    #[command(name = "table2-check")]
    Table2Check,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            let scenario = Scenario::load(&scenario, seed)?;
            commands::simulate(&scenario, &out, &mut stdout)
        }
        Command::Rate { log, scenario, out, jobs, table2_check, seed } => {
            let scenario = Scenario::load(&scenario, seed)?;
            commands::rate(&log, &scenario, &out, jobs, table2_check, &mut stdout)
        }
        Command::Acceptance { sessions, elevation_deg, out } => {
            commands::acceptance(&sessions, &elevation_deg, &out, &mut stdout)
        }
        Command::Table2Check => commands::table2_check(&mut stdout),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
