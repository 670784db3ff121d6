//! `salsa`: synthesize data, fit and apply additive kernel ridge models,
//! cross-validate the order, inspect effective-dimension rates, run the
//! group-sparse solvers and time kernel assembly.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] salsa_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("solver hit the iteration limit ({0} iterations)")]
    NotConverged(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use salsa_core::Error as E;
        match self {
            CliError::Core(
                E::NotFactorizable(_)
                | E::NoConvergence(_)
                | E::MaxIterations(_)
                | E::SecularNoRoot
                | E::Overflow(_)
                | E::TooLarge(_),
            )
            | CliError::NotConverged(_) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "salsa", version, about = "Additive kernel ridge regression toolkit")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for data-parallel loops (falls back to SALSA_THREADS, then 1).
    #[arg(long, global = true, env = "SALSA_THREADS")]
    threads: Option<usize>,

    /// Flat key=value file supplying defaults for the subcommand's flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic regression dataset.
    Synth(commands::SynthArgs),
    /// Fit a model on a CSV and save it.
    Fit(commands::FitArgs),
    /// Predict with a saved model.
    Predict(commands::PredictArgs),
    /// Cross-validate the additive order and ridge coefficient.
    Cv(commands::CvArgs),
    /// Effective-dimension tables along an n grid.
    Diag(commands::DiagArgs),
    /// Group-sparse fits over singleton and pair kernels.
    Shrink(commands::ShrinkArgs),
    /// Time kernel assembly and the ESP recurrence.
    Bench(commands::BenchArgs),
}

/// Common CSV input flags.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column: a header name or 0-based index (default: last column).
    #[arg(long)]
    pub target: Option<String>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::splice_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads.unwrap_or(1).max(1);
    let exec = if threads > 1 {
        salsa_core::Parallelism::Parallel
    } else {
        salsa_core::Parallelism::Sequential
    };
    let result = salsa_core::par::with_threads(threads, || commands::run(cli.command, exec));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
