//! `featimp`: train, explain, evaluate, and generate benchmark data for
//! loss-estimator-guided feature importance.
//!
//! Exit codes: 0 success, 1 user error (bad config, paths, or arguments),
//! 2 internal or numeric error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }

    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::User(_) => ExitCode::from(1),
            CliError::Internal(_) => ExitCode::from(2),
        }
    }
}

impl From<featimp_core::Error> for CliError {
    fn from(err: featimp_core::Error) -> Self {
        use featimp_core::Error as E;
        match &err {
            E::NonFinite { .. } | E::TrainingAborted { .. } | E::Generation(_) => {
                CliError::Internal(err.to_string())
            }
            E::SampleFailed { source, .. } => match source.as_ref() {
                E::NonFinite { .. } | E::TrainingAborted { .. } | E::Generation(_) => {
                    CliError::Internal(err.to_string())
                }
                _ => CliError::User(err.to_string()),
            },
            _ => CliError::User(err.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "featimp",
    version,
    about = "Loss-estimator-guided feature importance toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Jointly train a predictive model and its loss estimator on a CSV
    /// dataset.
    Train(TrainArgs),
    /// Produce per-feature attributions for selected samples.
    Explain(ExplainArgs),
    /// Measure attribution fidelity via delta-log-odds of top-k% masking.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic distribution-shift dataset triple.
    SynthGen(SynthGenArgs),
    /// Mean loss estimate as a function of input-noise severity.
    SeveritySweep(SeveritySweepArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Training dataset CSV (feature columns plus `label`).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for model.bin, history.csv, and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Override the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct ExplainArgs {
    /// Model file produced by `featimp train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV holding the samples to explain (also the reference set
    /// for the feature-mean strategy).
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated sample row indices (empty for none).
    #[arg(long, conflicts_with = "all", default_value = "")]
    samples: String,
    /// Explain every row of the dataset.
    #[arg(long)]
    all: bool,
    /// Masking strategy: zero, constant:<value>, or feature_mean.
    #[arg(long, default_value = "zero")]
    strategy: String,
    /// Worker threads for per-sample explanation.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Held-out dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Percentage of top-ranked features to mask.
    #[arg(long, default_value_t = 15.0)]
    k_percent: f64,
    /// Masking strategy: zero, constant:<value>, or feature_mean.
    #[arg(long, default_value = "zero")]
    strategy: String,
    /// Comma-separated explainer ids: granger_estimated, granger_oracle,
    /// random.
    #[arg(long, default_value = "granger_estimated,random")]
    explainers: String,
    /// Seed for the random-ranking baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also emit per-sample scores in long format (explainer, k, score).
    #[arg(long)]
    plot_data: bool,
    /// Worker threads for per-sample ranking computation.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct SynthGenArgs {
    /// Number of covariates.
    #[arg(long, default_value_t = 20)]
    dims: usize,
    /// Samples per dataset.
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    /// Mean of every covariate.
    #[arg(long, default_value_t = 0.0)]
    mean: f64,
    /// Off-diagonal covariance of the original set.
    #[arg(long, default_value_t = 0.3)]
    correlation: f64,
    /// Correlation delta of the correlation-shifted set.
    #[arg(long, default_value_t = 0.1)]
    correlation_shift: f64,
    /// Diagonal increase of the variance-shifted set.
    #[arg(long, default_value_t = 0.5)]
    variance_increase: f64,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw mean/correlation/shift parameters from their conventional
    /// uniform ranges instead of the flags above.
    #[arg(long)]
    draw_params: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct SeveritySweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated ascending noise standard deviations, starting at 0.
    #[arg(long, default_value = "0,0.5,1,2,4")]
    levels: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
            let _ = err.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Explain(args) => commands::explain(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::SynthGen(args) => commands::synth_gen(args),
        Command::SeveritySweep(args) => commands::severity_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
