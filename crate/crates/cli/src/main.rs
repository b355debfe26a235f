//! `ftucker` command-line interface.

mod commands;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "ftucker",
    version,
    about = "Functional Tucker decomposition and tensor subspace classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic digit-like dataset with a continuous mode.
    Synth(SynthArgs),
    /// Decompose one tensor file with HOSVD or FTD.
    Decompose(DecomposeArgs),
    /// Evaluate a fitted FTD model on new continuous-mode points.
    Interpolate(InterpolateArgs),
    /// Train, apply or evaluate class-basis classifiers.
    Classify {
        #[command(subcommand)]
        action: ClassifyAction,
    },
    /// Stratified k-fold cross-validation over HOSVD ranks and basis sizes.
    Cv(CvArgs),
    /// Run a packaged experiment.
    Experiment {
        #[command(subcommand)]
        which: ExperimentKind,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Hosvd,
    Ftd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Hosvd => "hosvd",
            Method::Ftd => "ftd",
        }
    }
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 48)]
    pub per_class: usize,
    /// Image size, `N` or `HxW`.
    #[arg(long, default_value = "16")]
    pub size: String,
    /// Number of continuous-mode grid points.
    #[arg(long, default_value_t = 50)]
    pub p: usize,
    #[arg(long, default_value_t = 10)]
    pub knots: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// First and last grid coordinate, `lo,hi`.
    #[arg(long, default_value = "1,10")]
    pub grid_range: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (receives manifest.json and samples/).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FtdFlags {
    #[arg(long, default_value_t = 1e-8)]
    pub lambda: f64,
    #[arg(long, default_value_t = 4.0)]
    pub bandwidth: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tau: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct DecomposeArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// One rank per mode, comma separated.
    #[arg(long)]
    pub ranks: String,
    #[command(flatten)]
    pub ftd: FtdFlags,
    /// Input tensor file (DTF1).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Continuous-mode coordinates, comma separated (ftd only).
    #[arg(long, conflicts_with = "grid_file")]
    pub grid: Option<String>,
    /// JSON array of continuous-mode coordinates (ftd only).
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    /// Model output file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of `sweep,relative_error,objective` (ftd only).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluation points, comma separated.
    #[arg(long, conflicts_with = "grid_file")]
    pub points: Option<String>,
    /// JSON array of evaluation points.
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    /// Reconstructed tensor output (DTF1).
    #[arg(long)]
    pub out: PathBuf,
    /// Discrete indices of a fiber to dump, comma separated (e.g. `0,4`).
    #[arg(long)]
    pub fiber: Option<String>,
    /// CSV for the fiber (`x,value`); defaults to the output path with `.csv`.
    #[arg(long)]
    pub fiber_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ClassifyAction {
    /// Build class bases (hosvd) or per-class FTD models (ftd).
    Train(TrainArgs),
    /// Predict class labels for every sample of a manifest.
    Predict(PredictArgs),
    /// Predict and score against the manifest labels.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Sample-mode ranks (spatial modes, then the continuous mode).
    #[arg(long)]
    pub ranks: String,
    /// Largest basis size to keep.
    #[arg(long)]
    pub k: usize,
    /// 0-based grid indices used for training; `a-b` and `a-b:step` ranges allowed.
    #[arg(long)]
    pub train_grid_idx: Option<String>,
    #[command(flatten)]
    pub ftd: FtdFlags,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model_dir: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// 0-based grid indices of the test samples; defaults to all.
    #[arg(long)]
    pub test_grid_idx: Option<String>,
    /// Basis size; defaults to the trained maximum.
    #[arg(long)]
    pub k: Option<usize>,
    /// CSV of `sample,predicted` (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub predict: PredictArgs,
    /// Metrics JSON (accuracy, macro F1, confusion) for the chosen k.
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    /// CSV of `k,accuracy,macro_f1` for k = 1..=max.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CvArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// JSON file with a list of rank tuples, e.g. `[[5,5,2],[3,3,2]]`.
    #[arg(long)]
    pub rank_grid: PathBuf,
    #[arg(long, default_value = "1-5")]
    pub k_list: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `cv.csv` and `heatmap_k<k>.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum ExperimentKind {
    /// Equal-domain and transfer-domain classification on synthetic digits.
    Digits(DigitsArgs),
}

#[derive(Args)]
pub struct DigitsArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// ExperimentConfig JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FTUCKER_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            anyhow::anyhow!("FTUCKER_THREADS must be a positive integer, got '{v}'")
        })?;
        if n == 0 {
            anyhow::bail!("FTUCKER_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Decompose(a) => commands::decompose(&a),
        Command::Interpolate(a) => commands::interpolate(&a),
        Command::Classify { action } => match action {
            ClassifyAction::Train(a) => commands::train(&a),
            ClassifyAction::Predict(a) => commands::predict(&a),
            ClassifyAction::Eval(a) => commands::eval(&a),
        },
        Command::Cv(a) => commands::cv(&a),
        Command::Experiment { which } => match which {
            ExperimentKind::Digits(a) => commands::digits(&a),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
