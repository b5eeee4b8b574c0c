use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vpc", version, about = "Classify functional time series by lagged covariance discrepancy")]
pub struct Cli {
    /// Worker threads (default: VPC_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON file whose keys mirror the subcommand's flags; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate both groups of a design to CSV.
    Simulate(SimulateArgs),
    /// Train a classifier from one CSV per group.
    Train(TrainArgs),
    /// Label consecutive blocks of curves.
    Classify(ClassifyArgs),
    /// Export the discriminative feature functions of one lag.
    Features(FeaturesArgs),
    /// Monte-Carlo evaluation of a simulation design.
    Evaluate(EvaluateArgs),
    /// Covariance break detection and segment-wise classification.
    #[command(subcommand)]
    Segments(SegmentsCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Design {
    Fma,
    Bspline,
    Fourier1,
    Fourier2,
}

impl Design {
    pub fn name(self) -> &'static str {
        match self {
            Design::Fma => "fma",
            Design::Bspline => "bspline",
            Design::Fourier1 => "fourier1",
            Design::Fourier2 => "fourier2",
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub design: Design,
    /// Curves per group.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 101)]
    pub grid_len: usize,
    /// `a^2` of the B-spline design.
    #[arg(long, default_value_t = 60.0)]
    pub a2: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// How many discriminative directions to keep per lag.
#[derive(Debug, Args)]
pub struct DimArgs {
    /// Smallest d reaching this share of the discrepancy spectrum.
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
    /// Fixed d (overrides --ratio).
    #[arg(long, conflicts_with = "full")]
    pub dim: Option<usize>,
    /// Keep every available direction.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Group CSV; repeat once per group (two or more).
    #[arg(long = "group", required = true, num_args = 1)]
    pub groups: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub max_lag: usize,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Candidate maximal lags for cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Vec<usize>,
    /// Candidate alphas for cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Vec<f64>,
    #[command(flatten)]
    pub dim: DimArgs,
    /// Monte-Carlo repetitions for P(h) and tuning.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Give every lag weight one.
    #[arg(long)]
    pub unit_weights: bool,
    /// Scale training and query curves to unit L2 norm.
    #[arg(long)]
    pub scale: bool,
    /// Fit an amplitude threshold on the unscaled training norms.
    #[arg(long)]
    pub tau_cv: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub curves: PathBuf,
    /// Curves per block; must equal the model's maximal lag + 1.
    #[arg(long)]
    pub block: Option<usize>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub lag: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Check L2-orthonormality of the exported functions.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub design: Design,
    /// Training curves per group (default per design: 50,100,600 / 100 / 200).
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Test curves (or blocks) per group.
    #[arg(long, default_value_t = 100)]
    pub n_test: usize,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 4)]
    pub max_p: usize,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [20.0, 40.0, 60.0, 80.0])]
    pub a2: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 101)]
    pub grid_len: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SegmentsCommand {
    /// Find covariance breaks; one CSV per channel.
    Detect(DetectArgs),
    /// Build a segment registry from curves and a break list.
    Build(BuildArgs),
    /// Classify single curves against two registries.
    Classify(SegClassifyArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct DetectArgs {
    /// Channel CSV; repeat for several channels observed together.
    #[arg(long = "curves", required = true, num_args = 1)]
    pub curves: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    #[arg(long, default_value_t = 20)]
    pub min_seg: usize,
    #[arg(long, default_value_t = 199)]
    pub permutations: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Break list output (1-based, one per line).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON report with statistics and p-values.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct BuildArgs {
    #[arg(long = "curves", required = true, num_args = 1)]
    pub curves: Vec<PathBuf>,
    /// Break list file; omit for a single segment.
    #[arg(long)]
    pub breaks: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SegClassifyArgs {
    #[arg(long)]
    pub registry0: PathBuf,
    #[arg(long)]
    pub registry1: PathBuf,
    #[arg(long = "curves", required = true, num_args = 1)]
    pub curves: Vec<PathBuf>,
    #[command(flatten)]
    pub dim: DimArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
