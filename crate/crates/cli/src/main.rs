//! `gaussflow`: config-driven experiment runner for the stochastic-flow
//! estimators. Every estimator is reachable via `run`; the named
//! subcommands are aliases that check the config's mode field.

mod config;
mod manifest;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use runner::RunStatus;

#[derive(Parser)]
#[command(name = "gaussflow", version, about = "Gaussian-measure stochastic flow laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the built-in field families.
    Fields {
        #[command(subcommand)]
        what: FieldsCommand,
    },
    /// Run the experiment named by the config's `mode` key.
    Run(RunArgs),
    /// Verify a finished run's checksums and reproduce it.
    Replay { manifest: PathBuf },
    /// Trajectory dump (mode = simulate).
    Simulate(RunArgs),
    /// Density estimators (mode = density).
    Density(RunArgs),
    /// Analytic bounds and integrability checks (mode = bounds).
    Bounds(RunArgs),
    /// Log-distance functional, Cauchy table, ratio statistics (mode = stability).
    Stability(RunArgs),
    /// Smoothing identity residuals (mode = mollify-check).
    MollifyCheck(RunArgs),
    /// Local maximal-function dump (mode = maximal).
    Maximal(RunArgs),
}

#[derive(Subcommand)]
enum FieldsCommand {
    /// Print the family registry.
    List,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the key = value config file.
    config: PathBuf,
    /// Output directory (overrides the config's `out` key).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_parallelism() {
    if let Ok(width) = std::env::var("GAUSSFLOW_PARALLELISM") {
        if let Ok(n) = width.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run_with_mode(args: &RunArgs, expect: Option<&str>) -> Result<RunStatus> {
    let cfg = ExperimentConfig::load(&args.config)?;
    if let Some(mode) = expect {
        runner::expected_mode(&cfg, mode)?;
    }
    let out_dir = match &args.out {
        Some(dir) => dir.clone(),
        None => PathBuf::from(cfg.get("out").unwrap_or("gaussflow-out")),
    };
    runner::execute(&cfg, &out_dir)
}

fn dispatch(cli: Cli) -> Result<RunStatus> {
    match cli.command {
        Command::Fields { what: FieldsCommand::List } => {
            runner::print_fields_table();
            Ok(RunStatus::Ok)
        }
        Command::Run(args) => run_with_mode(&args, None),
        Command::Replay { manifest } => runner::replay(&manifest),
        Command::Simulate(args) => run_with_mode(&args, Some("simulate")),
        Command::Density(args) => run_with_mode(&args, Some("density")),
        Command::Bounds(args) => run_with_mode(&args, Some("bounds")),
        Command::Stability(args) => run_with_mode(&args, Some("stability")),
        Command::MollifyCheck(args) => run_with_mode(&args, Some("mollify-check")),
        Command::Maximal(args) => run_with_mode(&args, Some("maximal")),
    }
}

fn main() -> ExitCode {
    configure_parallelism();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
