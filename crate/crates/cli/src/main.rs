//! `mclandscape`: config-driven experiments for regularized matrix completion.
//!
//! Exit codes: 0 success, 1 spurious minima under `scan --assert-clean`,
//! 2 configuration error, 3 internal error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<mc_landscape::Error> for CliError {
    fn from(e: mc_landscape::Error) -> Self {
        use mc_landscape::Error as E;
        match e {
            E::InvalidParameter(_) | E::DimensionMismatch { .. } | E::DegenerateFactor(_) => {
                CliError::Config(e.to_string())
            }
            E::NonFinite(_) | E::Io(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "mclandscape", version, about = "Landscape experiments for regularized matrix completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output` field.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for scans and concentration trials.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the instance and write its regeneration record.
    Gen(Common),
    /// Run one solve from a random start; write the trace.
    Solve(Common),
    /// Multi-start landscape scan with certification of every endpoint.
    Scan {
        #[command(flatten)]
        common: Common,
        /// Exit with status 1 if any spurious local minimum is found.
        #[arg(long)]
        assert_clean: bool,
    },
    /// Concentration trials over a grid of sampling rates.
    Conc(Common),
}

fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be >= 1".into())),
        #[cfg(feature = "parallel")]
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let (common, assert_clean) = match &cli.command {
        Command::Gen(c) | Command::Solve(c) | Command::Conc(c) => (c, false),
        Command::Scan { common, assert_clean } => (common, *assert_clean),
    };
    let cfg = ExperimentConfig::load(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output".into()))?;
    run_in_pool(common.threads, || match &cli.command {
        Command::Gen(_) => commands::gen(&cfg, &out).map(|_| 0),
        Command::Solve(_) => commands::solve(&cfg, &out).map(|_| 0),
        Command::Scan { .. } => commands::scan(&cfg, &out).map(|spurious| u8::from(assert_clean && spurious > 0)),
        Command::Conc(_) => commands::conc(&cfg, &out).map(|_| 0),
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
