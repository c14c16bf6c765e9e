//! Experiment runner for kernel Taylor-based policy iteration.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 configuration error or
//! config/solution mismatch, 3 numerical failure (singular system),
//! 4 policy iteration did not converge (artifacts are still written).

// Validation is written as `!(x > 0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use taylorpi_core::Method;

use crate::commands::{RunDir, Status};
use crate::error::{CliError, Result};
use crate::experiment::{Experiment, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "taylorpi",
    version,
    about = "Kernel Taylor-based policy iteration experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config (TOML). A run manifest is also a valid config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the config seed (for `evaluate`, only the rollout seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Solver method: taylor, direct or grid.
    #[arg(long, global = true, value_parser = parse_method)]
    pub method: Option<Method>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve, evaluate and write a run directory.
    Solve,
    /// Average return over the configured lengthscale × lambda grid.
    Sweep,
    /// Re-evaluate a solved run from its files.
    Evaluate {
        /// Run directory written by `solve`.
        #[arg(long)]
        solution: PathBuf,
    },
    /// Sample the value function and greedy policy of a solved run on a grid.
    ExportField {
        #[arg(long)]
        solution: PathBuf,
        /// Points per axis; defaults to `output.field_resolution`.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Write the configured supporting states.
    SampleStates,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn require_config(cli: &Cli) -> Result<&PathBuf> {
    cli.config
        .as_ref()
        .ok_or_else(|| CliError::Config(vec!["--config is required for this command".into()]))
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<Status> {
    let overrides = Overrides {
        seed: cli.seed,
        method: cli.method,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Solve => commands::solve(&Experiment::load(require_config(cli)?, &overrides)?),
        Command::Sweep => commands::sweep(&Experiment::load(require_config(cli)?, &overrides)?),
        Command::SampleStates => {
            commands::sample_states(&Experiment::load(require_config(cli)?, &overrides)?)
        }
        Command::Evaluate { solution } => {
            let run = RunDir::open(solution)?;
            check_method(cli, &run)?;
            let exp = run.experiment(cli.config.as_deref(), cli.seed, cli.out.as_deref())?;
            commands::evaluate(&run, &exp)?;
            Ok(Status::Success)
        }
        Command::ExportField {
            solution,
            resolution,
        } => {
            let run = RunDir::open(solution)?;
            check_method(cli, &run)?;
            let exp = run.experiment(cli.config.as_deref(), cli.seed, cli.out.as_deref())?;
            let n = resolution.unwrap_or(exp.config.output.field_resolution);
            commands::export_field(&run, &exp, n)?;
            Ok(Status::Success)
        }
    }
}

fn check_method(cli: &Cli, run: &RunDir) -> Result<()> {
    match cli.method {
        Some(m) if m != run.config.solver.method => Err(CliError::Mismatch(format!(
            "--method {m} but the run was solved with {}",
            run.config.solver.method
        ))),
        _ => Ok(()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.threads {
        Some(0) => Err(CliError::Config(
            vec!["--threads must be at least 1".into()],
        )),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(CliError::Config(vec![format!("--threads: {e}")])),
        },
        None => run(&cli),
    };
    match result {
        Ok(status) => {
            if status == Status::NotConverged {
                eprintln!("warning: policy iteration did not converge within solver.max_iters");
            }
            status.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
