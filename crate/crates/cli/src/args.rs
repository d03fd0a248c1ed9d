use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hdcpd", version, about = "Change point detection for Gaussian graphical models with missing values")]
pub struct Cli {
    /// Worker threads for gain evaluation and cross-validation [default: available parallelism]
    #[arg(long, global = true, env = "HDCPD_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment a CSV data matrix and write the result as JSON.
    Detect(DetectArgs),
    /// Draw a piecewise Gaussian data set with missing values.
    Simulate(SimulateArgs),
    /// Compare a detection result with the true change points.
    Evaluate(EvaluateArgs),
    /// Dump gain curves of one segment for plotting.
    Gains(GainsArgs),
}

/// Penalty selection: a fixed λ₀ or cross-validation over a log grid.
#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    /// Fixed penalty λ₀; disables cross-validation
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Smallest λ₀ of the cross-validation grid [default: 0.01]
    #[arg(long)]
    pub cv_min: Option<f64>,
    /// Largest λ₀ of the cross-validation grid [default: 2]
    #[arg(long)]
    pub cv_max: Option<f64>,
    /// Number of logarithmically spaced grid values [default: 10]
    #[arg(long)]
    pub cv_size: Option<usize>,
    /// Cross-validation folds [default: 10]
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    /// Input CSV with a header row
    pub input: PathBuf,
    /// Covariance estimator: complete, average, lw or pairwise
    #[arg(long, default_value = "lw")]
    pub method: String,
    /// Search: bs, obs, seedbs or dp
    #[arg(long, default_value = "bs")]
    pub search: String,
    /// Minimal segment length as a fraction of n
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Observations a variable needs to enter a segment's model
    #[arg(long, default_value_t = 5)]
    pub min_obs: usize,
    /// Per-segment penalty; required by and only valid for dp
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON path [default: stdout]
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Network: chain or random
    #[arg(long, default_value = "chain")]
    pub network: String,
    /// Rows; defaults to 500 with the standard segment sizes 70, 120, 120, 190
    #[arg(long)]
    pub n: Option<usize>,
    /// Variables [default: 100]
    #[arg(long)]
    pub p: Option<usize>,
    /// Comma-separated change points; required when n is given
    #[arg(long, value_delimiter = ',')]
    pub change_points: Option<Vec<usize>>,
    /// Missingness: none, mcar or block
    #[arg(long, default_value = "none")]
    pub missing: String,
    /// Fraction of cells to delete
    #[arg(long, default_value_t = 0.0)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path
    #[arg(long, short)]
    pub output: PathBuf,
    /// Ground-truth JSON path [default: output with extension .truth.json]
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Ground-truth JSON written by `simulate`
    #[arg(long)]
    pub truth: PathBuf,
    /// Result JSON written by `detect`
    #[arg(long)]
    pub result: PathBuf,
    /// Output JSON path [default: stdout]
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GainsArgs {
    /// Input CSV with a header row
    pub input: PathBuf,
    /// Covariance estimator, or `all` for every applicable one
    #[arg(long, default_value = "lw")]
    pub method: String,
    /// Segment as `start,end`, covering rows start+1..=end [default: all rows]
    #[arg(long, value_delimiter = ',')]
    pub segment: Option<Vec<usize>>,
    /// Also emit the naive gain curve
    #[arg(long)]
    pub include_naive: bool,
    /// Minimal child length as a fraction of n
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 5)]
    pub min_obs: usize,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Output JSON path [default: stdout]
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}
