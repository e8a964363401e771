use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "yesno", version, about = "Yes-no question mining and answer interpretation pipeline")]
pub struct Cli {
    /// Seed for every random choice (default 42)
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML file of flat `key = value` settings; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find yes-no questions in a dialogue corpus
    Identify(IdentifyArgs),
    /// Harvest keyword-labeled question/answer instances from matches
    Distill(DistillArgs),
    /// Build and export a training curriculum
    Plan(PlanArgs),
    /// Train the classifier on an exported curriculum
    Train(TrainArgs),
    /// Label instances with a trained model
    Predict(PredictArgs),
    /// Score predictions against gold labels
    Evaluate(EvaluateArgs),
    /// Interpret answers with a completion model
    Probe(ProbeArgs),
    /// Write a synthetic source/target suite
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Relaxed,
    Strict,
    Acts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    GoldOnly,
    Merged,
    Blended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayArg {
    Geometric,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McNemarArg {
    Chi2,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClientArg {
    Live,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldArg {
    Context,
    Question,
    Answer,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Matches drawn for the precision audit
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// TSV of the audit sample
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// JSON summary of the scan
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub matches: PathBuf,
    /// Downsample every label to the minority count
    #[arg(long)]
    pub balance: bool,
    /// Preceding turns kept as context
    #[arg(long)]
    pub context_window: Option<usize>,
    /// Leading answer sentences searched for keywords
    #[arg(long)]
    pub answer_window: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub distant: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Blending epochs
    #[arg(long)]
    pub m: Option<usize>,
    /// Distant-only epochs after blending
    #[arg(long)]
    pub n: Option<usize>,
    /// Epochs for gold-only and merged plans (default m + n)
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Subsample the distant set to at most this many instances
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long, value_enum)]
    pub decay: Option<DecayArg>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `plan`
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Hash buckets, a power of two
    #[arg(long)]
    pub buckets: Option<usize>,
    /// N-gram orders, e.g. 1,2
    #[arg(long, value_delimiter = ',')]
    pub ngrams: Option<Vec<usize>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub fields: Option<Vec<FieldArg>>,
    #[arg(long)]
    pub max_tokens_per_field: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Second system for a paired significance test
    #[arg(long)]
    pub pred2: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mcnemar: Option<McNemarArg>,
    /// Score unmapped predictions as wrong instead of excluding them
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long, value_enum)]
    pub client: Option<ClientArg>,
    /// Recording directory: read by replay, written by live
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// JSON prompt template replacing the built-in one
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub gold_size: Option<usize>,
    #[arg(long)]
    pub distant_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}
