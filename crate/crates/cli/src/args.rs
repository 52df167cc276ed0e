use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsefolio::data::OutputFormat;
use sparsefolio::portfolio::RhoRule;

#[derive(Debug, Parser)]
#[command(
    name = "sparsefolio",
    version,
    about = "Cardinality-constrained mean-variance portfolios"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one cardinality-constrained portfolio problem.
    Solve(SolveArgs),
    /// Print the feasible return interval and the selected target.
    Bounds(BoundsArgs),
    /// Solve on a uniform grid of return targets across the interval.
    Frontier(FrontierArgs),
    /// Sample random portfolios with at most alpha holdings.
    Cloud(CloudArgs),
    /// Parse a dataset and check its covariance matrix.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// OR-Library file, covariance CSV, or "simple" for the built-in instance.
    #[arg(long)]
    pub dataset: String,
    /// Mean-return file; required when --dataset is a covariance CSV.
    #[arg(long)]
    pub returns: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write data here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Projected-gradient tolerance of each subproblem.
    #[arg(long)]
    pub tol1: Option<f64>,
    /// Tolerance on x'y and on the objective change.
    #[arg(long)]
    pub tol2: Option<f64>,
    /// Cap on penalty-loop iterations.
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Initial penalty parameter; default is the Rayleigh quotient at Qe.
    #[arg(long)]
    pub tau0: Option<f64>,
    /// Stopping threshold on the squared change of Dykstra increments.
    #[arg(long)]
    pub dykstra_epsilon: Option<f64>,
    /// Upper safeguard on the spectral step length.
    #[arg(long)]
    pub step_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Return target; when absent it is chosen from the feasible interval.
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Position inside the return interval used when choosing a target.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon_tilde: f64,
    #[arg(long, value_enum, default_value_t = RuleArg::MinMagnitude)]
    pub rho_rule: RuleArg,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Maximum number of holdings.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub alpha: u64,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Report 0 in the time column.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Maximum number of holdings.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub alpha: u64,
    /// Position inside the return interval used when choosing a target.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon_tilde: f64,
    #[arg(long, value_enum, default_value_t = RuleArg::MinMagnitude)]
    pub rho_rule: RuleArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Maximum number of holdings.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub alpha: u64,
    /// Number of return targets, endpoints included.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
    /// Worker threads; 1 solves the grid sequentially.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct CloudArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Maximum number of holdings.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub alpha: u64,
    /// Number of sampled portfolios.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    MinMagnitude,
    CandidateMagnitude,
}

impl From<RuleArg> for RhoRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::MinMagnitude => RhoRule::MinMagnitude,
            RuleArg::CandidateMagnitude => RhoRule::CandidateMagnitude,
        }
    }
}
