//! `scenetree`: split, train, evaluate and inspect hierarchical scene
//! classifiers from descriptor CSV files.

mod commands;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scenetree::dataset::SplitRatios;

use failure::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "scenetree",
    version,
    about = "Hierarchical scene classification over a taxonomy"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads for training and batch inference.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assign whole events to train/validation/test.
    Split(SplitArgs),
    /// Train a hierarchical (or flat) model.
    Train(TrainArgs),
    /// Score a model on a split, or cross-validate with --kfold.
    Evaluate(EvaluateArgs),
    /// Per-sample predictions with joint probabilities.
    Predict(PredictArgs),
    /// Silhouette scores of the descriptors per class.
    Silhouette(SilhouetteArgs),
    /// Write a synthetic dataset whose clusters follow the taxonomy.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.7,0.1,0.2")]
    ratios: SplitRatios,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierKind {
    Softmax,
    Knn,
}

#[derive(Debug, Clone, Args)]
struct TrainOptions {
    /// Taxonomy file; the built-in food-scene taxonomy when omitted.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long = "lr", default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, value_enum, default_value_t = ClassifierKind::Softmax)]
    classifier: ClassifierKind,
    /// Neighbours for --classifier knn.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// One classifier over all leaves instead of one per node.
    #[arg(long)]
    flat: bool,
    /// Train on the raw class counts instead of oversampling.
    #[arg(long)]
    no_balance: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Split file from `split`; all samples train when omitted.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    options: TrainOptions,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "kfold")]
    model: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, conflicts_with = "kfold")]
    splits: Option<PathBuf>,
    /// Split to score when --splits is given.
    #[arg(long, default_value = "test")]
    split: scenetree::dataset::Split,
    /// Train and score on k event folds instead of loading a model.
    #[arg(long, conflicts_with = "model")]
    kfold: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    options: TrainOptions,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Taxonomy the model must have been trained with.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SilhouetteArgs {
    #[arg(long)]
    data: PathBuf,
    /// Score train and test events separately.
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Group samples by their ancestor at this level (leaves by default).
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Directory for silhouette.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FixturesArgs {
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    samples_per_leaf: usize,
    #[arg(long, default_value_t = 10)]
    event_size: usize,
    #[arg(long, default_value_t = 16)]
    dimension: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0.02)]
    event_noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::usage(format!("thread pool: {e}")))?;
    }
    let jobs = cli.jobs.unwrap_or(1);
    match cli.command {
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a, jobs),
        Command::Evaluate(a) => commands::evaluate(a, jobs),
        Command::Predict(a) => commands::predict(a),
        Command::Silhouette(a) => commands::silhouette(a),
        Command::Fixtures(a) => commands::fixtures(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.exit_code()
        }
    }
}
