use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use obliqforest::simgen::NonlinearMap;
use obliqforest::{BootstrapMode, ComboStrategy, VITechnique};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "obliqforest", version, about = "Accelerated oblique random survival forests")]
struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this value.
    #[arg(long, global = true, env = "OBLIQFOREST_THREADS", default_value_t = 0)]
    threads: usize,

    /// Suppress the summary lines printed to stderr.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a forest and write a model file.
    Fit(FitArgs),
    /// Predict mortality and survival probabilities for new rows.
    Predict(PredictArgs),
    /// Variable importance of a trained model on its training data.
    Importance(ImportanceArgs),
    /// Discrimination and calibration metrics on a labelled test set.
    Evaluate(EvaluateArgs),
    /// Generate simulated survival data with known relevant predictors.
    Simulate(SimulateArgs),
    /// Benchmark harnesses.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Monte-Carlo cross-validation of combination strategies on one dataset.
    Cv(BenchCvArgs),
    /// Importance discrimination on simulated data.
    Vi(BenchViArgs),
}

#[derive(Debug, Args)]
struct OutcomeArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the follow-up time column.
    #[arg(long)]
    time: String,
    /// Name of the event status column (1 = event, 0 = censored).
    #[arg(long)]
    status: String,
}

#[derive(Debug, Clone, Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 500)]
    n_tree: usize,
    /// Predictors per linear combination [default: round(sqrt(p))].
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 5)]
    n_split: usize,
    #[arg(long, default_value_t = 3)]
    n_retry: usize,
    #[arg(long, default_value_t = obliqforest::tree::DEFAULT_SPLIT_MIN_STAT)]
    split_min_stat: f64,
    #[arg(long, default_value_t = 10)]
    split_min_obs: usize,
    #[arg(long, default_value_t = 5)]
    split_min_events: usize,
    #[arg(long, default_value_t = 5)]
    leaf_min_obs: usize,
    #[arg(long, default_value_t = 1)]
    leaf_min_events: usize,
    #[arg(long, default_value = "fast")]
    strategy: ComboStrategy,
    #[arg(long, default_value = "multinomial")]
    bootstrap: BootstrapMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    outcome: OutcomeArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    forest: ForestArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV; its columns must match the training predictors.
    #[arg(long)]
    data: PathBuf,
    /// Outcome columns ignored when present in the feature CSV.
    #[arg(long, default_value = "time")]
    time: String,
    #[arg(long, default_value = "status")]
    status: String,
    /// Comma-separated horizons [default: training event-time quartiles].
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    /// The model's training data.
    #[command(flatten)]
    outcome: OutcomeArgs,
    #[arg(long, default_value = "negation")]
    technique: VITechnique,
    /// Seed for permutation importance.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report raw significant-coefficient counts for anova importance.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    outcome: OutcomeArgs,
    /// Horizon of the time-dependent C [default: training median event time].
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    max_corr: f64,
    #[arg(long, default_value_t = 15)]
    n_per_class: usize,
    #[arg(long, default_value_t = 1.64)]
    hazard_ratio: f64,
    #[arg(long, default_value_t = 0.45)]
    censoring: f64,
    #[arg(long, default_value = "skewed_square")]
    nonlinear_map: NonlinearMap,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Data CSV to write; the relevance file goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchCvArgs {
    #[command(flatten)]
    outcome: OutcomeArgs,
    /// Comma-separated combination strategies to compare.
    #[arg(long, value_delimiter = ',', default_value = "fast,cph")]
    learners: Vec<ComboStrategy>,
    #[arg(long, default_value_t = 25)]
    n_runs: usize,
    /// Task label written to every result row [default: data file stem].
    #[arg(long)]
    task: Option<String>,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum GridKind {
    /// Sample sizes 500, 1000, 2500 crossed with correlation bounds 0.3, 0.15, 0.
    Default,
    /// The single cell given by --n and --max-corr.
    Single,
}

#[derive(Debug, Args)]
struct BenchViArgs {
    #[arg(long, value_enum, default_value = "default")]
    grid: GridKind,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, value_delimiter = ',', default_value = "negation,permutation,anova")]
    techniques: Vec<VITechnique>,
    #[arg(long, default_value_t = 10)]
    n_reps: usize,
    #[arg(long, default_value_t = 500)]
    n_tree: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_io(&e) { EXIT_IO } else { EXIT_USAGE })
        }
    }
}

fn is_io(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<obliqforest::Error>().is_some_and(|e| e.is_io())
    })
}
