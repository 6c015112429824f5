//! `unishap`: estimate Shapley values, sweep estimator grids, and score
//! explanation faithfulness from the command line.

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use unishap_cli::run::{
    run_estimate, run_faithfulness, run_sweep, EstimateArgs, FaithfulnessArgs, SweepArgs,
};

#[derive(Parser)]
#[command(name = "unishap", version, about = "Shapley-value estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate attributions for one game; writes phi.csv and phi.meta.json.
    Estimate(EstimateArgs),
    /// Expand an experiment file over its grid and seeds; writes
    /// results.csv and summary.csv.
    Sweep(SweepArgs),
    /// Insertion/deletion AUC and rank agreement per (method, m); writes
    /// metrics.csv.
    Faithfulness(FaithfulnessArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = match &cli.command {
        Command::Estimate(args) => run_estimate(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Faithfulness(args) => run_faithfulness(args),
    };
    eprintln!("wall time: {:.3}s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::from(failure.category.exit_code())
        }
    }
}
