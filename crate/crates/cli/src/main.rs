mod commands;
mod failure;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Common, Method};

/// Inner-outer factorization and unknown-input estimation for linear plants.
///
/// Exit codes: 0 success, 1 I/O error, 2 unreadable input, 3 failed
/// precondition, 4 failed verification or numerical failure, 5 rank(CG) < m.
#[derive(Parser)]
#[command(name = "outerfactor", version)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Frequency grid size (verification grid; PSD grid intervals for `stats`).
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    /// Verification tolerance for innerness and product residuals.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Inverse input variance of the high-variance Kalman filter.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Factor a plant into outer and inner factors; writes outer.json,
    /// inner.json and factorization.json.
    Factorize {
        system: PathBuf,
        /// Add eps*I to a rank-deficient feedthrough before factoring.
        #[arg(long, value_name = "EPS")]
        regularize: Option<f64>,
    },
    /// Run an estimator over a measurement CSV; writes estimate.csv and
    /// estimate.json.
    Estimate {
        system: PathBuf,
        measurements: PathBuf,
        #[arg(long, value_enum, default_value = "sise")]
        method: Method,
        /// Factor the plant first and run the estimator on its outer factor.
        #[arg(long)]
        use_outer: bool,
    },
    /// Run a Monte-Carlo scenario; writes experiment.json, trajectories.csv
    /// and, when enabled, stats_psd.csv.
    Experiment {
        scenario: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Estimate statistics of a recovered signal and map them back through an
    /// inner factor; writes d_psd.csv and d_stats.json.
    Stats {
        samples: PathBuf,
        inner: PathBuf,
        #[arg(long, default_value_t = 128)]
        tau_max: usize,
        #[arg(long, default_value_t = 96)]
        segment_len: usize,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
    },
    /// Check that a system is inner and, optionally, that plant = outer * inner.
    Verify {
        inner: PathBuf,
        #[arg(long)]
        plant: Option<PathBuf>,
        #[arg(long)]
        outer: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = cli.common;
    let common = Common { grid_points: c.grid_points, tol: c.tol, epsilon: c.epsilon, seed: c.seed, out_dir: c.out_dir };
    let result = match &cli.command {
        Command::Factorize { system, regularize } => commands::factorize(system, *regularize, &common),
        Command::Estimate { system, measurements, method, use_outer } => {
            commands::estimate(system, measurements, *method, *use_outer, &common)
        }
        Command::Experiment { scenario, trials } => commands::experiment(scenario, *trials, &common),
        Command::Stats { samples, inner, tau_max, segment_len, burn_in } => {
            commands::stats(samples, inner, *tau_max, *segment_len, *burn_in, &common)
        }
        Command::Verify { inner, plant, outer } => commands::verify(inner, plant.as_deref(), outer.as_deref(), &common),
    };
    match result {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.reason);
            if let Some(ctx) = &f.context {
                eprintln!("{ctx}");
            }
            ExitCode::from(f.code)
        }
    }
}
