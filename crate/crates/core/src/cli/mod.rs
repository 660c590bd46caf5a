//! Command-line front end. Every subcommand stages its outputs, renames
//! them into place on success, and writes a run manifest next to its
//! primary output.
//!
//! Exit codes: 0 success, 2 configuration error, 3 bad input data,
//! 4 runtime failure.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use manifest::{manifest_path, sha256_bytes, sha256_file, Outputs, RunManifest, MANIFEST_SUFFIX};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(m: impl fmt::Display) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: m.to_string(),
        }
    }

    pub fn data(m: impl fmt::Display) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: m.to_string(),
        }
    }

    pub fn runtime(m: impl fmt::Display) -> Self {
        Self {
            kind: ErrorKind::Runtime,
            message: m.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Data => EXIT_DATA,
            ErrorKind::Runtime => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ErrorKind::Config => "configuration error",
            ErrorKind::Data => "data error",
            ErrorKind::Runtime => "runtime error",
        };
        write!(f, "{kind}: {}", self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "stancegraph", version, about = "Two-stage stance labeling of social media users")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the user-hashtag graph from a posts file and save a snapshot.
    BuildGraph(BuildGraphArgs),
    /// Label users and hashtags by label propagation from seed hashtags.
    Propagate(PropagateArgs),
    /// Pool tweet embeddings per user and build the interaction graph.
    Ingest(IngestArgs),
    /// Train a graph (or MLP) classifier on stage-one labels.
    Train(TrainArgs),
    /// Label every user of an interaction graph with a trained model.
    Predict(PredictArgs),
    /// Score predicted labels against truth labels.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic planted-partition dataset.
    Synth(SynthArgs),
    /// Annotate users through a chat-completion endpoint.
    Annotate(AnnotateArgs),
    /// Run every stage end to end and report metrics.
    Pipeline(PipelineArgs),
    /// Re-run the command recorded in a manifest and verify its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Posts file: `user<TAB>hashtag[,hashtag...]` per line.
    #[arg(long)]
    pub posts: PathBuf,
    /// Snapshot output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    /// Graph snapshot from `build-graph`.
    #[arg(long, conflicts_with = "posts", required_unless_present = "posts")]
    pub graph: Option<PathBuf>,
    /// Posts file, as an alternative to a snapshot.
    #[arg(long)]
    pub posts: Option<PathBuf>,
    #[arg(long, requires = "seeds_s2")]
    pub seeds_s1: Option<PathBuf>,
    #[arg(long, requires = "seeds_s1")]
    pub seeds_s2: Option<PathBuf>,
    /// Built-in seed set: `climate` or `gun-control`.
    #[arg(long, conflicts_with = "seeds_s1")]
    pub topic: Option<String>,
    /// JSON propagation config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override `key=value` (repeatable).
    #[arg(long = "set")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    #[arg(long)]
    pub std_multiplier: Option<f64>,
    /// Stance names `s1,s2` used in label files.
    #[arg(long)]
    pub stances: Option<String>,
    /// User labels output.
    #[arg(long)]
    pub out: PathBuf,
    /// Hashtag labels output.
    #[arg(long)]
    pub hashtags_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Tweet records, JSON lines or the binary container.
    #[arg(long)]
    pub tweets: PathBuf,
    /// Explicit `author<TAB>target<TAB>sentiment` interactions; replaces the
    /// targets found in the tweet records.
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    /// Embedding dimension; inferred from the first record when omitted.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Interaction graph output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Interaction graph from `ingest`.
    #[arg(long)]
    pub graph: PathBuf,
    /// Training labels (stage-one output or any label file).
    #[arg(long)]
    pub labels: PathBuf,
    /// `gat`, `sage` or `mlp`; overrides the config's architecture kind.
    #[arg(long)]
    pub model: Option<String>,
    /// JSON training config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub stances: Option<String>,
    /// Model checkpoint output.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch history output (JSON).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub stances: Option<String>,
    /// Label output.
    #[arg(long)]
    pub out: PathBuf,
    /// `user<TAB>p_s1<TAB>p_s2` output.
    #[arg(long)]
    pub probabilities: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted labels.
    #[arg(long)]
    pub pred: PathBuf,
    /// Truth labels.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub stances: Option<String>,
    /// Report output (JSON); printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tab-separated table output.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value = "evaluation")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Named preset to start from.
    #[arg(long, default_value = "default")]
    pub preset: String,
    /// JSON generator config; replaces the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stances: Option<String>,
    /// Directory for posts.tsv, tweets.jsonl, truth.tsv and seed files.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// JSON lines of `{"user_id", "tweets": [...], "topic"}`.
    #[arg(long)]
    pub requests: PathBuf,
    /// Topic applied to requests that omit one: `gun_control` or `climate_change`.
    #[arg(long)]
    pub topic: Option<String>,
    /// JSON endpoint config; flags override it.
    #[arg(long)]
    pub endpoint_config: Option<PathBuf>,
    #[arg(long)]
    pub url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Calls per second.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub concurrency: usize,
    /// Progress journal; reruns skip users recorded here.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Results output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Synthetic data spec, `preset=NAME[,key=value...]`.
    #[arg(long, conflicts_with_all = ["posts", "tweets"])]
    pub synth: Option<String>,
    #[arg(long, requires_all = ["tweets", "seeds_s1", "seeds_s2"])]
    pub posts: Option<PathBuf>,
    #[arg(long)]
    pub tweets: Option<PathBuf>,
    #[arg(long)]
    pub seeds_s1: Option<PathBuf>,
    #[arg(long)]
    pub seeds_s2: Option<PathBuf>,
    /// Truth labels for scoring; synthetic runs use the planted labels.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// `gat`, `sage`, `mlp` or `weighted-random`.
    #[arg(long, default_value = "gat")]
    pub model: String,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Score only users without stage-one labels.
    #[arg(long)]
    pub held_out: bool,
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    #[arg(long = "set")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stances: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::config(e.to_string()))?;
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    commands::dispatch(cli.command, recorded)
}

/// Entry point for the binary: parses the process arguments, runs, and
/// returns the exit code.
pub fn main_with_exit_code() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let recorded: Vec<String> = std::env::args().skip(1).collect();
    match commands::dispatch(cli.command, recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("stancegraph: {e}");
            e.exit_code()
        }
    }
}
