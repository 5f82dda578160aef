//! `wncs`: rate bounds, power design, Monte Carlo runs and the validation
//! suite from a JSON config.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "wncs", version, about)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "command")]
pub enum Command {
    /// Minimum stabilising transmission rate under both protocol models.
    Rate(RateArgs),
    /// Transmit-power design.
    Power(PowerArgs),
    /// Monte Carlo closed-loop runs.
    Simulate(SimulateArgs),
    /// Cover-time statistics of the configured network.
    Cover(CoverArgs),
    /// Acceptance suite on the shipped configs.
    Validate(ValidateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Io {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: Io,
    /// Relative tolerance of the L2-gain bisection [default: config value or 1e-6].
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// Minimum total power over the weight lattice.
    Lp,
    /// Closed-form two-link optimum and feasibility conditions.
    TwoLink,
    /// Feasible set on a power grid with its boundary.
    Region,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PowerArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: Io,
    #[arg(long, value_enum, default_value = "lp")]
    pub mode: PowerMode,
    /// Lattice resolution (lp) or grid points per axis (region) [default: config value or 200].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Slack in the stability constant [default: config value or 1e-6].
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: Io,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of trajectories [default: config value or 500].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output samples over the horizon [default: config value or 101].
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CoverArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub io: Io,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of completed cover times to sample.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    /// Extra config whose simulator invariants are checked as well.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the re-run.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot set thread count: {e}");
            return ExitCode::from(4);
        }
    }
    match commands::dispatch(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let report = serde_json::json!({
                "error": e.to_string(),
                "exit_code": e.exit_code(),
                "binding_bound": match &e {
                    wncs_core::Error::Infeasible { bound, .. } => serde_json::to_value(bound).ok(),
                    _ => None,
                },
            });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
