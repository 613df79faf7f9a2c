//! `hazardline`: batch and operations entry point.
//!
//! Exit codes are a scripting contract: 0 success, 1 validation failure,
//! 2 I/O or configuration error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hazardline_core::config::ConfigError;
use hazardline_server::{EventError, ServeError};

#[derive(Parser)]
#[command(name = "hazardline", version, about = "Hazard simulation, ensembles and replanning under a deadline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Override a configuration field, e.g. `--set design.n=16`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one ensemble scenario without controls.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Scenario index in the design.
        #[arg(long, default_value_t = 0)]
        scenario: u32,
        /// Steps to simulate; defaults to the remaining planning horizon.
        #[arg(long)]
        horizon: Option<u32>,
        /// Output directory; defaults to `<output_dir>/simulate-e<scenario>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every scenario of the design and aggregate burn probabilities.
    Ensemble {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one planning cycle and write the plan with its Pareto front.
    Plan {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory holding the event log.
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
    /// Check a pipeline document or a run configuration.
    Validate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Rebuild state from an event log and print its digests.
    Replay {
        #[arg(long, value_name = "PATH")]
        log: PathBuf,
        /// Run configuration the log was written under; without it only
        /// the log itself is checked.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Model(String),
    #[error(transparent)]
    Log(#[from] EventError),
    #[error(transparent)]
    Serve(#[from] ServeError),
}

impl CliError {
    pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.into(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Model(_) => 1,
            CliError::Log(EventError::Io { .. }) => 2,
            CliError::Log(_) => 1,
            CliError::Config(_) | CliError::Io { .. } | CliError::Serve(_) => 2,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, scenario, horizon, out } => commands::simulate(&config, scenario, horizon, out),
        Command::Ensemble { config, out } => commands::ensemble(&config, out),
        Command::Plan { config, out } => commands::plan(&config, out),
        Command::Serve { config, port, host, data_dir } => commands::serve(&config, &host, port, &data_dir),
        Command::Validate { config, set } => commands::validate(&config, &set),
        Command::Replay { log, config, set } => commands::replay(&log, config.as_deref(), &set),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
