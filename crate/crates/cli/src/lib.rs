//! Command-line surface of the forecasting pipeline.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 training abort,
//! 4 artifact mismatch, 5 forecast key mismatch in comparisons.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tempora_core::Error;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "tempora", version, about = "Multi-horizon retail demand forecasting")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "tempora-out")]
    pub out: PathBuf,
    /// `section.key=value` override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a daily panel from transactions or the synthetic generator.
    Ingest,
    /// Train the hybrid model on a panel.
    Train {
        #[arg(long)]
        panel: PathBuf,
        /// Continue from a checkpoint's training state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Forecast the test split, run baselines and write the report.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        panel: PathBuf,
    },
    /// Forecast one series from one origin (default: the last day) to stdout.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        sku: String,
        #[arg(long)]
        origin: Option<chrono::NaiveDate>,
    },
    /// Pairwise Diebold-Mariano tests over forecast CSVs.
    Compare {
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn mismatch(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFiniteLoss(_) | Error::NonFiniteGradient(_) => 3,
            Error::Checkpoint { .. } | Error::UnknownHorizon(_) => 4,
            Error::KeyMismatch(_) => 5,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.set, cli.seed)?;
    let out = &cli.out;
    match &cli.command {
        Command::Ingest => commands::ingest(&cfg, out),
        Command::Train { panel, resume } => commands::train_cmd(&cfg, panel, resume.as_deref(), out),
        Command::Evaluate { checkpoint, panel } => commands::evaluate(&cfg, checkpoint, panel, out),
        Command::Forecast {
            checkpoint,
            panel,
            sku,
            origin,
        } => commands::forecast(&cfg, checkpoint, panel, sku, *origin),
        Command::Compare { files } => commands::compare(&cfg, files, out),
    }
}
