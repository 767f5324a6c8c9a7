//! `loco`: command-line driver for terrain generation, rendering, foothold and reward
//! evaluation, the fusion policy and scripted rollouts.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

/// Failures that map to exit code 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] loco_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("check failed: {0}")]
    Check(String),
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

pub fn write_file(path: &Path, data: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, data).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// One JSON record per line.
    Lines,
    /// Indented JSON records.
    Pretty,
}

#[derive(Debug, Parser)]
#[command(name = "loco", version, about = "Depth-conditioned humanoid locomotion toolkit", arg_required_else_help = true)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "LOCO_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Lines)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ReportOut {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a terrain heightfield file.
    GenTerrain(commands::GenTerrain),
    /// Render a depth frame from a heightfield.
    RenderDepth(commands::RenderDepth),
    /// Score touchdowns of a trajectory file with the foothold reward.
    FootholdEval(commands::FootholdEval),
    /// Evaluate the reward suite on a snapshot.
    RewardEval(commands::RewardEval),
    /// Run one policy step.
    PolicyForward(commands::PolicyForward),
    /// Finite-difference check of the policy gradients.
    Gradcheck(commands::Gradcheck),
    /// Scripted rollout over generated terrain.
    Rollout(commands::Rollout),
    /// Highway-gate statistics over scripted rollouts.
    GateStats(commands::GateStats),
    /// Write a freshly initialised weight container.
    InitWeights(commands::InitWeights),
    /// Print the effective configuration.
    ShowConfig(ReportOut),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
