//! `teamnet` command-line interface.
//!
//! Exit codes: 0 success, 1 internal error, 2 bad input.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    BadInput(String),
    Internal(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self::BadInput(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Self::Internal(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            Self::BadInput(_) => 2,
            Self::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadInput(m) | Self::Internal(m) => f.write_str(m),
        }
    }
}

impl From<teamnet::Error> for CliError {
    fn from(e: teamnet::Error) -> Self {
        use teamnet::Error as E;
        match e {
            E::Data(_) | E::Config(_) | E::Io(_) | E::Search(_) => Self::BadInput(e.to_string()),
            E::Tensor(_) | E::Model(_) => Self::Internal(e.to_string()),
        }
    }
}

impl From<teamnet::data::DataError> for CliError {
    fn from(e: teamnet::data::DataError) -> Self {
        Self::BadInput(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "teamnet", version, about = "Tempo-relational team modeling")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-signal synthetic dataset.
    Synth(SynthArgs),
    /// Check a dataset file and print a summary.
    Validate { path: PathBuf },
    /// Train models on a dataset and write checkpoints.
    Train(TrainArgs),
    /// Leave-one-group-out evaluation with CSV and JSON reports.
    Eval(EvalArgs),
    /// Saliency or counterfactual explanation of one team.
    Explain(ExplainArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 12)]
    pub teams: usize,
    #[arg(long, default_value_t = 4)]
    pub roster: usize,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = 4)]
    pub features: usize,
    /// Share of each label driven by the planted signal (0 = pure noise).
    #[arg(long, default_value_t = 1.0)]
    pub strength: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file (default: synthesize from the configuration).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated task list.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value = "mt-trenn")]
    pub paradigm: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Validation team id (default: the last team).
    #[arg(long)]
    pub val_team: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Folds {
    All,
    Cyclic,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// A paradigm name or `all`.
    #[arg(long, default_value = "all")]
    pub paradigm: String,
    /// Number of seeds (0, 1, … n−1).
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long, value_enum)]
    pub folds: Option<Folds>,
    /// Worker threads for folds.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Leave wall-clock numbers out of the reports.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Method {
    Saliency,
    Counterfactual,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    Increase,
    Decrease,
}

#[derive(Args)]
pub struct ExplainArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Team id to explain.
    #[arg(long)]
    pub team: String,
    /// Member position in the roster (task targets only).
    #[arg(long, default_value_t = 0)]
    pub member: usize,
    /// Task head, or `expected_teamwork`.
    #[arg(long, default_value = "expected_teamwork")]
    pub task: String,
    /// Importance levels for the rendered saliency map.
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    /// Keep the gradient sign.
    #[arg(long)]
    pub signed: bool,
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum, default_value = "increase")]
    pub direction: DirectionArg,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.verbose {
        env_logger::Builder::new().filter_level(log::LevelFilter::Info).init();
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Validate { path } => commands::validate(&path),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Explain(a) => commands::explain(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
