//! Command-line front end: argument parsing, configuration merging, and the
//! exit-code contract.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.
//! Every failure prints one JSON object on a single line to stderr.

pub mod commands;
pub mod io;
pub mod settings;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpp_core::MppError;
use serde_json::json;
use std::path::PathBuf;
use thiserror::Error;

use crate::io::{IoError, TableKind};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "mpp", version, about = "Bayesian multi-period portfolio estimation, sampling and backtesting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bayes estimate of the weights with exact and asymptotic covariance.
    Estimate(CommonArgs),
    /// Posterior weight draws as CSV.
    SampleWeights {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        sampler: Option<SamplerFlag>,
        /// CSV destination; with it, a JSON summary goes to stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Predictive wealth band and default probability for one period.
    PredictWealth {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated holdings; defaults to the Bayes estimate.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        holdings: Option<Vec<f64>>,
    },
    /// Rolling-window backtest over the last `--horizon` rows.
    Backtest {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        policy: Option<PolicyFlag>,
        /// Per-period CSV destination.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also run the diffuse prior on the same data and seed.
        #[arg(long)]
        compare: bool,
    },
    /// Jarque–Bera test of standardized posterior weight draws.
    CheckNormality(CommonArgs),
    /// Empirical-Bayes hyperparameters from a presample file.
    FitPrior(CommonArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct CommonArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Option<TableKind>,
    /// JSON configuration; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub prior: Option<PriorFlag>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub d0: Option<f64>,
    #[arg(long)]
    pub presample_n: Option<usize>,
    #[arg(long)]
    pub presample_offset: Option<usize>,
    /// Estimation window length.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub wealth: Option<f64>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Constant per-period risk-free rate.
    #[arg(long, conflicts_with = "rf_file", allow_hyphen_values = true)]
    pub rf: Option<f64>,
    /// Date-aligned risk-free rates (`date,rf`).
    #[arg(long)]
    pub rf_file: Option<PathBuf>,
    /// Monte Carlo draws B.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub level: Option<f64>,
    /// JSON destination instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorFlag {
    Diffuse,
    Conjugate,
    EmpiricalBayes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerFlag {
    Fast,
    Basic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyFlag {
    Bayes,
    Plugin,
    Zero,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] IoError),
    #[error(transparent)]
    Core(#[from] MppError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Core(e) => match e.root() {
                MppError::InvalidContext(_)
                | MppError::InvalidLevel(_)
                | MppError::InvalidSelector(_)
                | MppError::InvalidPrior(_)
                | MppError::InvalidDf(_)
                | MppError::ZeroWealth
                | MppError::TooFewSamples { .. } => EXIT_USAGE,
                MppError::InsufficientData(_) | MppError::InvalidInput(_) | MppError::DimensionMismatch { .. } => {
                    EXIT_DATA
                }
                _ => EXIT_NUMERICAL,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Data(e) => e.kind(),
            CliError::Core(e) => e.kind(),
        }
    }

    /// Single-line JSON diagnostic.
    pub fn diagnostic(&self) -> String {
        let mut d = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Core(MppError::AtPeriod { date, .. }) = self {
            d["date"] = json!(date);
        }
        d.to_string()
    }
}

/// Parses `args` and runs the command, writing results to stdout and
/// diagnostics to stderr.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_owned()).diagnostic());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match commands::execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code())
        }
    }
}
