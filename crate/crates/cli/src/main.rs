//! Batch command-line front end: single runs, parameter sweeps, stability
//! analysis, and policy comparisons over scenario files.
//!
//! Every run writes a manifest that echoes the fully resolved configuration
//! (including the rescaled scenario), which is sufficient to reproduce the
//! artifacts bit for bit.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 scenario validation
//! failure, 4 runtime error.

mod commands;
mod common;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "crossflow", version, about = "Store-and-forward traffic-signal control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Controller policy: cyclic_bp | classic_bp | proportional | greedy.
    #[arg(long)]
    policy: Option<String>,
    /// Softmax sharpness of the cyclic policy.
    #[arg(long)]
    eta: Option<f64>,
    /// Cycle length in seconds (rescales saturation and demand rates).
    #[arg(long)]
    cycle: Option<u32>,
    /// Decision interval in seconds.
    #[arg(long)]
    slot: Option<u32>,
    /// Horizon in cycles.
    #[arg(long)]
    horizon: Option<u32>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dynamics mode: fluid | integer.
    #[arg(long)]
    mode: Option<String>,
    /// Measurement error bound.
    #[arg(long)]
    delta_max: Option<f64>,
    /// Turning-estimator window, in observed steps.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics, plots, and a manifest.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory (default: $CROSSFLOW_OUT_DIR or ./crossflow-out).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Cross-product of policies and decision intervals, one run per cell.
    Sweep {
        scenario: PathBuf,
        /// Comma-separated policies (default: all four).
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
        /// Comma-separated intervals in seconds (default: 30,60,90,120).
        #[arg(long, value_delimiter = ',')]
        intervals: Vec<u32>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Analyze the stability region of a scenario's demand.
    Stability {
        scenario: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run all four policies on the identical seeded scenario.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Emit a built-in scenario to a file.
    Generate {
        /// Which scenario family: two-junction | grid.
        family: String,
        /// Destination path for the scenario TOML.
        path: PathBuf,
        /// Grid rows (grid family only).
        #[arg(long, default_value_t = 4)]
        rows: u32,
        /// Grid columns (grid family only).
        #[arg(long, default_value_t = 4)]
        cols: u32,
        /// Uniform demand scale applied to the family defaults.
        #[arg(long, default_value_t = 1.0)]
        demand_scale: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            scenario,
            overrides,
            out,
        } => commands::simulate::run(&scenario, &overrides, out),
        Command::Sweep {
            scenario,
            policies,
            intervals,
            overrides,
            out,
        } => commands::sweep::run(&scenario, &policies, &intervals, &overrides, out),
        Command::Stability { scenario, out } => commands::stability::run(&scenario, out),
        Command::Compare {
            scenario,
            overrides,
            out,
        } => commands::compare::run(&scenario, &overrides, out),
        Command::Generate {
            family,
            path,
            rows,
            cols,
            demand_scale,
        } => commands::generate::run(&family, &path, rows, cols, demand_scale),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
