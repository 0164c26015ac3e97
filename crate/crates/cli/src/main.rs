mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tlpred_core::angular::Bandwidth;

use crate::config::parse_bandwidth;

/// Transformed-linear prediction for extremes.
#[derive(Debug, Parser)]
#[command(name = "tlpred", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate rows X = A ∘ Z with A ~ uniform(lo, hi)^{p×q}.
    Simulate(SimulateArgs),
    /// Fit marginals, the TPDM and the tail predictor; write a model document.
    Fit(FitArgs),
    /// Point predictions and conditional intervals for extreme rows.
    Predict(PredictArgs),
    /// Coverage and width of a predictions file.
    Assess(AssessArgs),
    /// Run the simulation study for a list of seeds.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat TOML file of option values; command-line values win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of variables (default 7).
    #[arg(long)]
    p: Option<usize>,
    /// Number of factors (default 400).
    #[arg(long)]
    q: Option<usize>,
    /// Number of rows (default 60000).
    #[arg(long)]
    n: Option<usize>,
    /// Generator entries lower bound (default 0).
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    /// Generator entries upper bound (default 5).
    #[arg(long, allow_negative_numbers = true)]
    hi: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Sidecar with the generator and true TPDM (default: <output>.truth.json).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum MarginalArg {
    Gpd,
    Empirical,
    None,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// Radial quantile for TPDM estimation (default 0.95).
    #[arg(long)]
    quantile: Option<f64>,
    /// Columns per factor (default 9).
    #[arg(long)]
    qstar: Option<usize>,
    /// Factors in the ensemble (default 51).
    #[arg(long)]
    ndecomp: Option<usize>,
    /// 'auto' or a positive kernel width on the log-ratio scale.
    #[arg(long, value_parser = parse_bandwidth)]
    bandwidth: Option<Bandwidth>,
    /// Moving-window detrend; the bare flag uses 901.
    #[arg(long, num_args = 0..=1, default_missing_value = "901")]
    window: Option<usize>,
    /// Empirical CDF throughout instead of a GPD upper tail.
    #[arg(long)]
    no_gpd_tail: bool,
    /// Marginal transform (default gpd, or none with --truth).
    #[arg(long, value_enum)]
    marginal: Option<MarginalArg>,
    /// Seeded random training fraction (default 2/3).
    #[arg(long, conflicts_with = "train_rows")]
    train_fraction: Option<f64>,
    /// Train on the first N complete rows instead.
    #[arg(long)]
    train_rows: Option<usize>,
    /// Simulation sidecar: known tail ratios and a TPDM error report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Non-numeric column carried through as a row label.
    #[arg(long)]
    label_column: Option<String>,
    /// Angular mass level of the joint region (default 0.95).
    #[arg(long)]
    region_level: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum SubsetArg {
    All,
    Train,
    Test,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// CSV destination (default stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Keep rows whose prediction exceeds this quantile (default 0.95).
    #[arg(long)]
    quantile: Option<f64>,
    /// Interval level (default 0.95).
    #[arg(long)]
    level: Option<f64>,
    #[arg(long, value_enum)]
    subset: Option<SubsetArg>,
    #[arg(long)]
    label_column: Option<String>,
    /// Conditional density grid for a unit prediction.
    #[arg(long)]
    density_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum ScaleArg {
    Model,
    Original,
}

#[derive(Debug, Args)]
struct AssessArgs {
    #[command(flatten)]
    common: Common,
    /// Predictions CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON report destination (default stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Scale of the intervals to assess (default original when present).
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,
    /// Model document, for the Gaussian reference.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    /// Data the model was fitted on, for the Gaussian reference.
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    /// Reference interval level (default 0.95).
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[command(flatten)]
    common: Common,
    /// Seeds as `1,2,5` or `1-5`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Rows per instance (default 60000).
    #[arg(long)]
    n: Option<usize>,
    /// Leading training rows (default 40000).
    #[arg(long)]
    n_train: Option<usize>,
    /// Radial quantile for TPDM estimation (default 0.99).
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    qstar: Option<usize>,
    #[arg(long)]
    ndecomp: Option<usize>,
    #[arg(long, value_parser = parse_bandwidth)]
    bandwidth: Option<Bandwidth>,
    #[arg(long)]
    level: Option<f64>,
    /// JSON report destination (default stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::Simulate(a) => ("simulate", commands::simulate(a)),
        Command::Fit(a) => ("fit", commands::fit(a)),
        Command::Predict(a) => ("predict", commands::predict(a)),
        Command::Assess(a) => ("assess", commands::assess(a)),
        Command::Replicate(a) => ("replicate", commands::replicate(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tlpred {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
