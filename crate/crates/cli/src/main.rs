//! `hdsi`: lasso fits, double-selection effects, p-value adjustment,
//! joint confidence regions and the Monte Carlo study.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdsi_core::Method;

#[derive(Parser)]
#[command(
    name = "hdsi",
    version,
    about = "Simultaneous inference for high-dimensional linear regression"
)]
struct Cli {
    /// Worker threads for bootstrap and simulation loops.
    #[arg(long, global = true, env = "HDSI_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lasso with the theory-driven penalty, plus the sup-score test.
    Fit(FitArgs),
    /// Per-target estimates with robust standard errors.
    Effects(EffectsArgs),
    /// Adjusted p-values for the target coefficients.
    Adjust(AdjustArgs),
    /// Marginal or joint confidence intervals.
    Confint(ConfintArgs),
    /// Monte Carlo study of the testing procedures.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// CSV file with one header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Outcome column.
    #[arg(long)]
    pub outcome: String,
    /// Add `COL:other` interaction columns for every other regressor.
    #[arg(long, value_name = "COL")]
    pub interact: Option<String>,
}

#[derive(Args, Clone)]
pub struct PenaltyArgs {
    /// Refit least squares on the selected columns.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, value_name = "BOOL")]
    pub post_lasso: bool,
    /// Heteroscedasticity-robust penalty loadings.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, value_name = "BOOL")]
    pub hetero: bool,
    /// Penalty constant c.
    #[arg(long, default_value_t = 1.1)]
    pub c: f64,
}

#[derive(Args, Clone)]
pub struct OutputArgs {
    /// Print JSON instead of the table.
    #[arg(long)]
    pub json: bool,
    /// Also write JSON here, with a `.manifest.json` sidecar.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Level of the sup-score test.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bootstrap draws for the sup-score test.
    #[arg(long = "B", default_value_t = hdsi_core::multitest::DEFAULT_B)]
    pub b: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectsMethod {
    Ds,
    Ols,
}

#[derive(Args)]
pub struct EffectsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Target columns: a name, a `prefix*` pattern, or a comma-separated list.
    #[arg(long)]
    pub targets: String,
    #[arg(long, value_enum, default_value_t = EffectsMethod::Ds)]
    pub method: EffectsMethod,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Include the n x K score matrix in JSON output.
    #[arg(long)]
    pub scores: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Estimates come from a saved `effects` JSON or are computed inline.
#[derive(Args)]
pub struct SourceArgs {
    /// JSON written by `hdsi effects --out`.
    #[arg(long, value_name = "PATH", conflicts_with = "data", required_unless_present = "data")]
    pub input: Option<PathBuf>,
    #[arg(long, requires_all = ["outcome", "targets"])]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long, value_name = "COL", requires = "data")]
    pub interact: Option<String>,
    /// Estimator used inline.
    #[arg(long, value_enum, default_value_t = EffectsMethod::Ds)]
    pub effects_method: EffectsMethod,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
}

#[derive(Args)]
pub struct AdjustArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// none, bonferroni, holm, BH or RW.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Bootstrap draws (RW only).
    #[arg(long = "B")]
    pub b: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct ConfintArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Simultaneous region from the multiplier bootstrap.
    #[arg(long)]
    pub joint: bool,
    /// Bootstrap draws (joint only).
    #[arg(long = "B")]
    pub b: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long = "K", default_value_t = 60)]
    pub k: usize,
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    #[arg(long, default_value_t = 3.0)]
    pub sigma2: f64,
    /// Number of nonzero coefficients.
    #[arg(long, default_value_t = 12)]
    pub s: usize,
    /// Replications.
    #[arg(long = "R", default_value_t = 500)]
    pub r: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long = "B", default_value_t = 500)]
    pub b: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: hdsi_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .format_target(false)
        .init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: starting thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let ctx = commands::Context {
        argv,
        threads: rayon::current_num_threads(),
    };
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&ctx, a),
        Command::Effects(a) => commands::effects(&ctx, a),
        Command::Adjust(a) => commands::adjust(&ctx, a),
        Command::Confint(a) => commands::confint(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
