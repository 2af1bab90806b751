//! `tshrink`: fit, simulate and benchmark Student-t shrinkage regression.
//!
//! Exit codes: 0 success, 2 bad input, 3 numeric failure, 4 bad configuration.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tshrink_core::harness::lasso::LassoTuning;
use tshrink_core::Error;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const INPUT: u8 = 2;
    pub const NUMERIC: u8 = 3;
    pub const CONFIG: u8 = 4;

    pub fn input(message: String) -> Self {
        Self {
            code: Self::INPUT,
            message,
        }
    }

    pub fn config(message: String) -> Self {
        Self {
            code: Self::CONFIG,
            message,
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => CliError::CONFIG,
        Error::InvalidData(_) | Error::Dimension { .. } => CliError::INPUT,
        Error::AtIteration { source, .. } => error_code(source),
        _ => CliError::NUMERIC,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: error_code(&e),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tshrink",
    version,
    about = "Sparse linear regression with Student-t shrinkage priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the variational posterior to a CSV data set and write a JSON report.
    Fit(FitArgs),
    /// Write one replication of a named experiment as CSV.
    Simulate(SimulateArgs),
    /// Run replications of a named experiment and write a CSV summary per method.
    Benchmark(BenchmarkArgs),
    /// Compare joint and marginal variational fits on the toy problem.
    CompareKl(CompareArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Base seed for every random stream.
    #[arg(long, env = "TSHRINK_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSV with a header row and `y` in the first column.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Known noise standard deviation.
    #[arg(long, conflicts_with = "eb_sigma")]
    pub sigma: Option<f64>,
    /// Estimate the noise standard deviation by empirical Bayes (the default).
    #[arg(long)]
    pub eb_sigma: bool,
    /// Credible level for intervals and selection.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Number of blocks for the mean update.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Prior shape.
    #[arg(long)]
    pub a0: Option<f64>,
    /// Prior rate; derived from the preset when omitted.
    #[arg(long)]
    pub bn: Option<f64>,
    /// Prior preset: simulation or strict.
    #[arg(long, default_value = "simulation")]
    pub preset: String,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Lasso start: cv, cv:K, universal, scaled or fixed:LAMBDA.
    #[arg(long, default_value = "cv")]
    pub lasso: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// example1a, example1b, example2 or toyC.
    #[arg(long)]
    pub spec: String,
    /// Replication index.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    /// Also write the true coefficients and support as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub spec: String,
    /// Comma-separated subset of tvb, tmcmc, marginal.
    #[arg(long, default_value = "tvb")]
    pub methods: String,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Worker threads for replications.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value = "cv")]
    pub lasso: String,
    #[arg(long, default_value_t = 1000)]
    pub gibbs_iterations: usize,
    #[arg(long, default_value_t = 200)]
    pub burn_in: usize,
    /// Adam steps for the marginal fit.
    #[arg(long, default_value_t = 10_000)]
    pub marginal_steps: usize,
    /// Also write every per-replication record as JSON.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Monte Carlo draws per coordinate per step.
    #[arg(long, default_value_t = 4)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "cv")]
    pub lasso: String,
}

pub fn parse_lasso(s: &str) -> Result<LassoTuning, CliError> {
    let bad = || {
        CliError::config(format!(
            "unknown lasso rule `{s}` (expected cv, cv:K, universal, scaled or fixed:LAMBDA)"
        ))
    };
    match s.split_once(':') {
        None => match s {
            "cv" => Ok(LassoTuning::CrossValidated(10)),
            "universal" => Ok(LassoTuning::Universal),
            "scaled" => Ok(LassoTuning::Scaled),
            _ => Err(bad()),
        },
        Some(("cv", k)) => k
            .parse()
            .map(LassoTuning::CrossValidated)
            .map_err(|_| bad()),
        Some(("fixed", v)) => v.parse().map(LassoTuning::Fixed).map_err(|_| bad()),
        Some(_) => Err(bad()),
    }
}

pub fn check_level(level: f64) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "--level must lie in (0, 1), got {level}"
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Benchmark(args) => commands::benchmark(args),
        Command::CompareKl(args) => commands::compare_kl(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tshrink: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
