//! `pucl`: reproducible PU-learning experiments from JSON configs.
//!
//! Every command resolves a config (file, then flags), writes its artifacts
//! to the output directory and records a [`RunManifest`] next to them.
//! Exit codes: 0 success, 1 failed check or diverged training, 2 bad
//! configuration or input.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pucl_core::training::LossKind;
use pucl_core::Error;

pub use config::{build_data, DataBundle, DataConfig, ExperimentConfig, Source, SweepSection};
pub use manifest::{ResolvedRun, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "pucl", version, about = "PU learning with debiased contrastive pretraining")]
pub struct Cli {
    /// Experiment config (JSON). Built-in defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the train/test datasets described by the config.
    Synth,
    /// Contrastive pretraining of encoder and projector.
    Pretrain(PretrainArgs),
    /// Train a classifier on a frozen encoder or from scratch.
    Train(TrainArgs),
    /// Evaluate a saved encoder and classifier on test data.
    Eval(EvalArgs),
    /// Train one probe per prior distortion factor.
    Sweep(SweepArgs),
    /// Run the executable property checks.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// PU training CSV; replaces the configured train source.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Labeled test CSV; replaces the configured test source.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Prior correction of the contrastive loss; 0 gives the biased objective.
    #[arg(long)]
    pub tau_plus: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
#[group(id = "trunk", required = true, multiple = false, args = ["encoder", "scratch"])]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Frozen encoder checkpoint.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Train a fresh encoder jointly with the classifier.
    #[arg(long)]
    pub scratch: bool,
    /// Train on the true labels with weighted BCE.
    #[arg(long)]
    pub supervised: bool,
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Class prior among unlabeled rows; defaults to the data's own.
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub encoder: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    /// Labeled test CSV; defaults to the configured test source.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub encoder: PathBuf,
    /// Comma-separated distortion factors, e.g. `0.1,1,10`.
    #[arg(long, value_delimiter = ',')]
    pub factors: Option<Vec<f64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Theory,
    Gradients,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Random draws per property (theory 1,000, gradients 100 by default).
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("check failed: {}", .0.join(", "))]
    CheckFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) | CliError::Core(Error::Training { .. } | Error::Numeric(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    match cli.command {
        Command::Synth => commands::synth(cfg),
        Command::Pretrain(a) => commands::pretrain(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::Sweep(a) => commands::sweep(cfg, a),
        Command::Check(a) => commands::check(cfg.seed, a),
    }
}
