//! `rnnfc`: ingest price CSVs, train and compare recurrent forecasters,
//! and predict next-day closes.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numerical
//! divergence.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rnnfc_core::CellKind;

#[derive(Debug, Parser)]
#[command(name = "rnnfc", version, about = "LSTM and GRU next-day price forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate a daily OHLCV CSV, printing its summary.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        /// Also write the load report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Cross-validate one cell kind, retrain on all cross-validation data
    /// and evaluate on the most recent holdout.
    Train {
        #[arg(long)]
        csv: PathBuf,
        /// TrainConfig JSON; omitted keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cell: Option<CellKind>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Maximum folds trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the LSTM/GRU comparison once per seed.
    Compare {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seeds, e.g. `1,2,3`.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Predict next-day closes with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Only forecast the day after the last row.
        #[arg(long)]
        last_window_only: bool,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest { csv, report } => commands::ingest(&csv, report.as_deref()),
        Command::Train {
            csv,
            config,
            cell,
            out,
            seed,
            jobs,
        } => commands::train(&csv, config.as_deref(), cell, seed, &out, jobs),
        Command::Compare {
            csv,
            config,
            seeds,
            out,
            jobs,
        } => commands::compare(&csv, config.as_deref(), &seeds, &out, jobs),
        Command::Predict {
            model,
            csv,
            last_window_only,
            out,
        } => commands::predict(&model, &csv, last_window_only, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
