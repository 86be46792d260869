//! The `metaqa` command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use metaqa_core::candidates::{Condition, Matcher};
use metaqa_core::decoder::Threshold;
use metaqa_core::train::Preset;
use thiserror::Error;

mod commands;
mod files;

/// Exit status for bad input: flags, missing files, schema mismatches.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status for failures after the inputs were accepted.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

pub(crate) fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "metaqa", version, about = "Meta-answering over extractive QA candidate lists")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Base directory for relative paths.
    #[arg(long, global = true, env = "METAQA_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic M-best list and gold annotations.
    Synth(SynthArgs),
    /// Train a meta-answerer.
    Train(TrainArgs),
    /// Write one prediction per input question.
    Predict(PredictArgs),
    /// Score predictions against gold annotations.
    Eval(EvalArgs),
    /// Abstain/answer breakdown tables.
    Report(ReportArgs),
    /// Pick the decision threshold that maximizes F1.
    TuneThreshold(TuneArgs),
    /// Run the episode server.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub mbest: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub questions: usize,
    #[arg(long, default_value_t = 200)]
    pub vocab: usize,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Context tokens on each side of an answer.
    #[arg(long, default_value_t = 6)]
    pub context: usize,
    #[arg(long, default_value_t = 1.0)]
    pub p_cue: f64,
    #[arg(long, default_value_t = 0.49)]
    pub answerable: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "q")]
    pub prefix: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub mbest: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, requires = "dev_gold")]
    pub dev_mbest: Option<PathBuf>,
    #[arg(long, requires = "dev_mbest")]
    pub dev_gold: Option<PathBuf>,
    /// Output directory for the model, metrics and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "answeronly")]
    pub preset: Preset,
    /// JSON file overriding preset values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub pretrain_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub mbest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Take M and k from this preset.
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Overrides the threshold stored in the model.
    #[arg(long)]
    pub threshold: Option<Threshold>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Nq,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatcherArg {
    Exact,
    Surface,
}

impl From<MatcherArg> for Matcher {
    fn from(m: MatcherArg) -> Matcher {
        match m {
            MatcherArg::Exact => Matcher::ExactSpan,
            MatcherArg::Surface => Matcher::Surface,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "annotator")]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gold: PathBuf,
    /// Score a held-out annotator instead of predictions (bootstrap only).
    #[arg(long, conflicts_with = "pred")]
    pub annotator: bool,
    #[arg(long, value_enum, default_value_t = Metric::Nq)]
    pub metric: Metric,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MatcherArg::Exact)]
    pub matcher: MatcherArg,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSONL of labeled episodes (`system`, `question_id`, `label`).
    #[arg(long, group = "source")]
    pub episodes: Option<PathBuf>,
    /// Counts as NAME=abstain_correct,abstain_incorrect,answer_correct,answer_incorrect.
    #[arg(long, group = "source", num_args = 1..)]
    pub counts: Vec<String>,
    /// A play-server store; episodes are labeled with --mbest and --gold.
    #[arg(long, group = "source", requires_all = ["mbest", "gold"])]
    pub play_dir: Option<PathBuf>,
    #[arg(long)]
    pub mbest: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MatcherArg::Exact)]
    pub matcher: MatcherArg,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub mbest: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, required_unless_present = "pred", conflicts_with = "pred")]
    pub model: Option<PathBuf>,
    /// Predictions carrying candidate scores, instead of a model.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Save a copy of the model with the tuned threshold.
    #[arg(long, requires = "model")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MatcherArg::Exact)]
    pub matcher: MatcherArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub mbest: PathBuf,
    /// Directory for session logs.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
    #[arg(long, default_value_t = 5000)]
    pub backend_timeout_ms: u64,
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)?;
    }
    let paths = files::Paths::new(cli.data_dir);
    match cli.command {
        Command::Synth(a) => commands::synth(&paths, a),
        Command::Train(a) => commands::train(&paths, a),
        Command::Predict(a) => commands::predict(&paths, a),
        Command::Eval(a) => commands::eval(&paths, a),
        Command::Report(a) => commands::report(&paths, a),
        Command::TuneThreshold(a) => commands::tune(&paths, a),
        Command::Serve(a) => commands::serve(&paths, a),
    }
}
