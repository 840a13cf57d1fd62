//! `edglm` command-line tool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edglm_cli::commands::{output_dir, run_fit, run_forecast, run_select, run_synth};
use edglm_cli::{CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "edglm", version, about = "Dynamic exponential-family models: filter, forecast, select, simulate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's `output`, else `.`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, smooth and score; writes filtered.csv, smoothed.csv, onestep.csv, metrics.json.
    Fit(Common),
    /// h-step-ahead predictive summaries; writes forecast.csv.
    Forecast(Common),
    /// Discount-factor grid search; writes selection.csv.
    Select(Common),
    /// Simulate a series from the configured model; writes the data CSV and truth.csv.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Random seed (overrides the config's `seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    let (common, seed) = match &cli.command {
        Command::Fit(c) | Command::Forecast(c) | Command::Select(c) => (c, None),
        Command::Synth { common, seed } => (common, *seed),
    };
    let cfg = RunConfig::from_path(&common.config)?;
    let out = output_dir(&cfg, common.out.as_deref());
    match cli.command {
        Command::Fit(_) => run_fit(&cfg, &out),
        Command::Forecast(_) => run_forecast(&cfg, &out),
        Command::Select(_) => run_select(&cfg, &out),
        Command::Synth { .. } => run_synth(&cfg, &out, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("edglm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
