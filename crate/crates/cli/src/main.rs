//! `cstk`: reproducible compressive-sensing experiments from the command line.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cstk", version, about = "Compressive sensing toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Args)]
pub struct Global {
    /// JSON configuration; flags take precedence over its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Primary output path.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Convergence trace CSV.
    #[arg(long, global = true, value_name = "PATH")]
    pub trace: Option<PathBuf>,
}

impl Global {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Walsh-Hadamard transform of a vector container.
    Fwht(commands::fwht::FwhtArgs),
    /// Hadamard measurements of a signal.
    Sense(commands::sense::SenseArgs),
    /// Recover a signal from measurements.
    Reconstruct(commands::reconstruct::ReconstructArgs),
    /// FMCW LiDAR depth mapping.
    Lidar {
        #[command(subcommand)]
        command: commands::lidar::LidarCommand,
    },
    /// Sensing-matrix quality report.
    Diagnose(commands::diagnose::DiagnoseArgs),
    /// Information-theoretic metrics.
    Info {
        #[command(subcommand)]
        command: commands::info::InfoCommand,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.global.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Fwht(a) => commands::fwht::run(g, a),
        Command::Sense(a) => commands::sense::run(g, a),
        Command::Reconstruct(a) => commands::reconstruct::run(g, a),
        Command::Lidar { command } => commands::lidar::run(g, command),
        Command::Diagnose(a) => commands::diagnose::run(g, a),
        Command::Info { command } => commands::info::run(g, command),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CSTK_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cstk: {e}");
            e.exit_code()
        }
    }
}
