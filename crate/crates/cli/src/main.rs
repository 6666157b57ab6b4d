use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

mod commands;
mod config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] coded_stream::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Library(coded_stream::Error::DegenerateWorker { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(version, about = "Coded computation on heterogeneous workers: load splits, delay analytics, simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of simulated jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    purging: Option<Switch>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Optimal and uniform load split.
    Split,
    /// Iteration moments, queue statistics and the delay lower bound.
    Analyze,
    /// Discrete-event simulation of the job stream.
    Simulate,
    /// Simulated and predicted delay over a redundancy grid.
    SweepOmega,
    /// Search code parameters for the smallest mismatch.
    OptimizeCode,
    /// Check that every K tasks of an encoding matrix decode.
    ValidateCode,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let overrides = config::Overrides {
        seed: cli.seed,
        jobs: cli.jobs,
        purging: cli.purging.map(|s| matches!(s, Switch::On)),
    };
    let exp = config::load(path, overrides)?;
    match cli.command {
        Command::Split => commands::split(&exp, &cli.out),
        Command::Analyze => commands::analyze(&exp, &cli.out),
        Command::Simulate => commands::simulate(&exp, &cli.out),
        Command::SweepOmega => commands::sweep_omega(&exp, &cli.out),
        Command::OptimizeCode => commands::optimize_code_cmd(&exp, &cli.out),
        Command::ValidateCode => commands::validate_code_cmd(&exp, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
