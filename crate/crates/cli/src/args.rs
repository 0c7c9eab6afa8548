use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kmono::Estimator;

#[derive(Debug, Parser)]
#[command(
    name = "kmono",
    version,
    about = "Fits, inversion, interpolation error search and Monte Carlo studies for k-monotone densities"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. They override the JSON config file,
/// which overrides the built-in defaults.
#[derive(Debug, Args)]
pub struct Global {
    /// Order of monotonicity, 1 to 8.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// JSON object with subcommand settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Relative tolerance of the inequality checks.
    #[arg(long, global = true)]
    pub tol_ineq: Option<f64>,
    /// Relative tolerance of the equality checks.
    #[arg(long, global = true)]
    pub tol_eq: Option<f64>,
    /// Worker threads for the Monte Carlo loops.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the LSE or MLE to a sample and certify it.
    Fit(FitArgs),
    /// Evaluate the mixing distribution function of a saved fit.
    Invert(InvertArgs),
    /// Search for large Hermite interpolation errors of perfect splines.
    Conjecture(ConjectureArgs),
    /// Spacing of the fitted knots around a point across sample sizes.
    GapStudy(StudyArgs),
    /// Stability of the rescaled pointwise errors across sample sizes.
    RateStudy(RateArgs),
    /// Simulate the limit process and compute its invelope.
    LimitSim(LimitArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with one observation per line (optional header "x") or a JSON array.
    pub input: PathBuf,
    #[arg(long)]
    pub estimator: Option<Estimator>,
    /// Number of intervals of the evaluation grid.
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Fit JSON written by `kmono fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Evaluation points, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t: Vec<f64>,
    /// CSV of evaluation points, one per line (optional header "t").
    #[arg(long, conflicts_with = "t")]
    pub points: Option<PathBuf>,
    /// Without explicit points: number of grid points up to 1.25 times the
    /// last knot.
    #[arg(long, default_value_t = 200)]
    pub grid_points: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SamplerKind {
    UniformOrder,
    Dirichlet,
    Clustered,
    Mixed,
}

#[derive(Debug, Args)]
pub struct ConjectureArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerKind>,
    /// Dirichlet concentration.
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    /// Width of the cluster of the clustered sampler.
    #[arg(long, default_value_t = 1e-4)]
    pub width: f64,
    #[arg(long)]
    pub grid_resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub x0: Option<f64>,
    /// Sample sizes, comma separated and increasing.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub estimator: Option<Estimator>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Derivative orders, comma separated, each below k.
    #[arg(long, value_delimiter = ',')]
    pub j_list: Option<Vec<usize>>,
    /// Skip the mixing distribution function.
    #[arg(long)]
    pub no_inverse: bool,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    #[arg(long)]
    pub paths: Option<usize>,
    /// The path is simulated on [-c, c].
    #[arg(long)]
    pub half_width: Option<f64>,
    /// Requested grid step.
    #[arg(long)]
    pub delta: Option<f64>,
}
