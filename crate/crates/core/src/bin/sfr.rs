//! `sfr` — functional regression of sphere-valued time series with
//! long-memory errors.
//!
//! Every subcommand reads a `[section]` + `key = value` config file and
//! writes CSV artifacts plus a `manifest.txt` into the output directory.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sfr_core::cli::{run, CliError, Command, RunConfig};
use sfr_core::simulation::FitVariant;

#[derive(Parser)]
#[command(
    name = "sfr",
    version,
    about = "Functional regression of sphere-valued time series with long-memory errors",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Path to the `[section]` + `key = value` config file.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory for artifacts and manifest.txt (created if absent).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Seed override; takes precedence over the config file's `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (default: available parallelism; 1 for a serial
    /// reference run).
    #[arg(long)]
    threads: Option<usize>,
    /// Covariance variant override: `oracle` or `plugin`.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Subcommand)]
enum Sub {
    /// Monte Carlo prediction study: simulate, fit, and summarize MAE maps.
    Simulate(Common),
    /// Generate a synthetic radiation/pressure dataset bundle.
    ClimateGen(Common),
    /// Fit the regression on a bundle and save a portable model file.
    Fit(Common),
    /// Predict from a saved model file over a bundle's covariates.
    Predict(Common),
    /// k-fold cross-validation over time indices.
    Crossval {
        #[command(flatten)]
        common: Common,
        /// Number of folds (default: config `[cv] k`, else 5).
        #[arg(long)]
        k: Option<usize>,
    },
}

fn to_run_config(command: Command, common: Common, k: Option<usize>) -> Result<RunConfig, CliError> {
    let variant = match &common.variant {
        None => None,
        Some(raw) => Some(
            raw.parse::<FitVariant>()
                .map_err(|e| CliError::Config(format!("--variant: {e}")))?,
        ),
    };
    Ok(RunConfig {
        command,
        config_path: common.config,
        output_dir: common.out,
        seed: common.seed,
        threads: common.threads,
        variant,
        k,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.command {
        Sub::Simulate(c) => to_run_config(Command::Simulate, c, None),
        Sub::ClimateGen(c) => to_run_config(Command::ClimateGen, c, None),
        Sub::Fit(c) => to_run_config(Command::Fit, c, None),
        Sub::Predict(c) => to_run_config(Command::Predict, c, None),
        Sub::Crossval { common, k } => to_run_config(Command::Crossval, common, k),
    };
    let outcome = config.and_then(|c| run(&c));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
