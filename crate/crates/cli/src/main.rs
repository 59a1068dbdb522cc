//! `mmq`: generate synthetic recordings, train, evaluate, sweep and check
//! gradients.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "mmq", version, about = "Masked multi-query emotion recognition on incomplete physiological signals")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory
    Generate,
    /// Train a model on a dataset directory
    Train {
        /// Dataset directory written by `generate`
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Evaluate a trained model on one split of a dataset
    Eval {
        /// Directory written by `train`
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: commands::SplitArg,
    },
    /// Missing-rate sweep over seeds and ablations
    Sweep {
        /// Seeds, e.g. 0,1,2 (default from config)
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Also train the mean-imputation baseline
        #[arg(long)]
        baseline: bool,
        /// Train one model per test rate instead of one at the training rate
        #[arg(long)]
        per_rate: bool,
        /// Record wall-clock seconds per run
        #[arg(long)]
        timing: bool,
    },
    /// Finite-difference checks of every op and of the full loss
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
}

/// Error classes with their own exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Verification(String),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use mmq_core::Error as E;
    if let Some(f) = err.downcast_ref::<Failure>() {
        return match f {
            Failure::Usage(_) => 2,
            Failure::Verification(_) => 1,
        };
    }
    match err.downcast_ref::<E>() {
        Some(E::Config(_) | E::Usage(_) | E::Io { .. } | E::Generation(_) | E::Json(_) | E::Csv(_)) => 2,
        Some(_) => 1,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MMQ_LOG", "info")).init();
    let cli = Cli::parse();
    match commands::run(cli.command, &cli.overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
