//! `contrast`: train models, explain predictions and score explanations.

mod commands;
mod config;
mod failure;
mod stub;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Parser)]
#[command(
    name = "contrast",
    version,
    about = "Pertinent positive and negative explanations for tabular classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill missing base values and feature statistics from a dataset.
    Bases {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a built-in model.
    Train(TrainArgs),
    /// Explain rows of a dataset; writes one JSON object per line.
    Explain(ExplainArgs),
    /// Score an explanation file.
    Evaluate(EvaluateArgs),
    /// Serve a model over the HTTP scoring protocol.
    ServeStub(StubArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelKind {
    Cart,
    Forest,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Scale {
    Log,
    Prob,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub kind: ModelKind,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of rows used for training; the rest is held out.
    #[arg(long, default_value_t = 1.0)]
    pub split: f64,
    /// Default: 5 for a tree, unlimited for a forest.
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, value_enum, default_value = "log")]
    pub scale: Scale,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ModelSource {
    /// Model file written by `train`.
    #[arg(long, conflicts_with = "remote")]
    pub model: Option<PathBuf>,
    /// Base URL of a remote scoring endpoint.
    #[arg(long)]
    pub remote: Option<String>,
    /// Schema; required with --remote, ignored with --model.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Explain one data row (0-based).
    #[arg(long, conflicts_with_all = ["all_test", "all"])]
    pub row: Option<usize>,
    /// Explain every held-out row of the model's split.
    #[arg(long, conflicts_with = "all")]
    pub all_test: bool,
    /// Explain every row.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// FISTA steps per start.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Random directions per gradient estimate.
    #[arg(long)]
    pub grad_samples: Option<usize>,
    /// Smoothing radius of the gradient estimate (encoded units).
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Categorical handling: frequency map or simplex sampling.
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    /// Corner samples per point for the simplex engine.
    #[arg(long)]
    pub ssa_samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EngineArg {
    Fma,
    Ssa,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub explanations: PathBuf,
    /// Writes the report as JSON; the text table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sparsity weight used when choosing proxy rows.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Args)]
pub struct StubArgs {
    /// Serve this model file.
    #[arg(long, conflicts_with = "fixed", required_unless_present = "fixed")]
    pub model: Option<PathBuf>,
    /// Answer every row with these comma-separated scores.
    #[arg(long, allow_hyphen_values = true)]
    pub fixed: Option<String>,
    #[arg(long, default_value = "127.0.0.1:0")]
    pub addr: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), Failure> = match cli.command {
        Command::Bases { schema, data, out } => commands::bases(&schema, &data, &out),
        Command::Train(args) => commands::train(&args),
        Command::Explain(args) => commands::explain(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::ServeStub(args) => stub::serve(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
