use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use legendre_uq_cli::config::ExperimentConfig;
use legendre_uq_cli::runner::{self, Overrides};

/// Moment tables for the random Legendre initial-value problem.
///
/// Reads a JSON experiment config describing the joint law of the equation
/// index and the initial conditions, computes truncated mean/variance
/// tables, and writes CSV + markdown + JSON reports.
#[derive(Parser)]
#[command(name = "legendre-uq", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute moment tables and write all report files.
    Run(JobArgs),
    /// Check the moment engine against a fresh Monte Carlo run
    /// (fails when any cell misses its four-standard-error band).
    Compare(JobArgs),
    /// Validate the model and print the report (fails when it does).
    Validate(JobArgs),
}

#[derive(Args)]
struct JobArgs {
    /// Path to the experiment config (JSON).
    config: PathBuf,
    /// Output directory (overrides the config's `output.directory`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo seed (overrides the config's `mc.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Size of the worker thread pool (default: all cores). Results are
    /// identical for every choice; this only trades speed for cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Compute moments even when the index distribution has unbounded
    /// support. The truncated series then carries no convergence guarantee;
    /// the numbers are formal.
    #[arg(long)]
    override_unbounded: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    let (Command::Run(args) | Command::Compare(args) | Command::Validate(args)) = &cli.command;
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot size the worker thread pool")?;
    }
    let config = ExperimentConfig::load(&args.config)?;
    let overrides = Overrides {
        out: args.out.clone(),
        seed: args.seed,
        override_unbounded: args.override_unbounded,
    };
    match cli.command {
        Command::Run(_) => runner::run(&config, &overrides),
        Command::Compare(_) => runner::compare(&config, &overrides),
        Command::Validate(_) => runner::validate(&config, &overrides),
    }
}
