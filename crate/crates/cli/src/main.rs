//! `inspect`: plan, check, seed and simulate cooperative inspection missions.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "inspect", version, about = "STL-based multi-vehicle inspection planner")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Output directory (default `out`; `check` writes files only when given).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Final smoothing sharpness; overrides the config's `params.beta`.
    #[arg(long, global = true, value_name = "F")]
    pub beta: Option<f64>,
    /// Optimizer iteration budget.
    #[arg(long, global = true, value_name = "N", default_value_t = 5000)]
    pub max_iters: usize,
    /// Number of optimizer starts (the seed plus perturbed copies).
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    pub multi_start: usize,
    /// RNG seed for multi-start perturbations.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    /// Also write per-subformula robustness time series to `margins.csv`.
    #[arg(long, global = true)]
    pub margins: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Route, seed and optimize a mission; write trajectories and a report.
    Plan { config: PathBuf },
    /// Evaluate trajectory CSVs against a mission's formula.
    Check {
        config: PathBuf,
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
    },
    /// Route only: dump the route plan and seed trajectories.
    Seed { config: PathBuf },
    /// Plan, then execute under an event script with replanning.
    Simulate { config: PathBuf, events: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(b) = cli.global.beta {
        if !(b > 0.0 && b.is_finite()) {
            eprintln!("error: --beta must be positive, got {b}");
            return ExitCode::from(2);
        }
    }
    if cli.global.multi_start == 0 {
        eprintln!("error: --multi-start must be at least 1");
        return ExitCode::from(2);
    }
    let code = match &cli.command {
        Command::Plan { config } => commands::plan(config, &cli.global),
        Command::Check { config, trajectories } => commands::check(config, trajectories, &cli.global),
        Command::Seed { config } => commands::seed(config, &cli.global),
        Command::Simulate { config, events } => commands::simulate(config, events, &cli.global),
    };
    ExitCode::from(code)
}
