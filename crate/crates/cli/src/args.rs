use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "rmc", version, about = "Robust matrix completion with hybrid M-estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Complete a MatrixMarket coordinate file.
    Solve(SolveArgs),
    /// RMSE versus SNR on synthetic data.
    SweepSnr(SweepSnrArgs),
    /// RMSE versus observed fraction on synthetic data.
    SweepFraction(SweepFractionArgs),
    /// Mean runtime over the four matrix-size cases.
    Bench(BenchArgs),
    /// Re-run the configuration recorded in a manifest.json.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    How,
    Hoc,
    Hop,
    Huber,
}

#[derive(Debug, Clone, Args)]
pub struct LossArgs {
    /// Exponent for HOP, in (0, 1].
    #[arg(long, default_value_t = 0.6)]
    pub p: f64,
    /// Fixed Welsch scale for HOW (default: follow the threshold c).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Fixed Cauchy scale for HOC (default: follow the threshold c).
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 2.0)]
    pub xi: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub zeta: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Lower the threshold from the first iteration instead of holding it
    /// until the objective settles.
    #[arg(long)]
    pub no_warm_start: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Observed matrix in MatrixMarket coordinate format.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = LossKind::How)]
    pub loss: LossKind,
    #[command(flatten)]
    pub loss_args: LossArgs,
    #[arg(long)]
    pub rank: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the dense completion UV.
    #[arg(long)]
    pub dense: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = 300)]
    pub m: usize,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
    /// Outlier probability of the mixture noise.
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    /// Variance ratio between outlier and nominal noise.
    #[arg(long, default_value_t = 100.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub loss_args: LossArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Worker threads (0: one per core). Does not affect results.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepSnrArgs {
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', default_value = "0,2,4,6,8,10,12,14,16,18,20")]
    pub snr_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.3)]
    pub observe_fraction: f64,
    #[command(flatten)]
    pub exp: ExperimentArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepFractionArgs {
    /// Comma-separated grid of observed fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.4,0.5,0.6")]
    pub fraction_grid: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub snr_db: f64,
    #[command(flatten)]
    pub exp: ExperimentArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Which of the cases 1-4 to run.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub cases: Vec<usize>,
    #[arg(long, default_value_t = 10.0)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 0.5)]
    pub observe_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 100.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub loss_args: LossArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}
