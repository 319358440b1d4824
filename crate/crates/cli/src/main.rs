mod config;
mod error;
mod pipeline;
mod plot;

use clap::{Parser, Subcommand};
use config::{Overrides, RunConfig};
use error::CliResult;
use pipeline::Run;
use std::path::PathBuf;

/// Search a trajectory anomaly detector and use it to filter the samples of
/// a stochastic trajectory predictor.
///
/// Every configuration key is also a flag of the same name, e.g.
/// `--held-out hotel` or `--budget 5`.
#[derive(Debug, Parser)]
#[command(name = "tpad", version)]
struct Cli {
    /// TOML run configuration. Defaults to the run directory's snapshot.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Window the scenes, split them, and write the cache and manifest.
    Prepare,
    /// Perturb the held-out windows into negatives for test AUC.
    MakeNegatives,
    /// Run or resume the architecture search.
    Search,
    /// Train the searched (or given) model and report validation AUC.
    TrainFinal {
        /// Explicit operator sequence of 23 integers, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        spec: Option<Vec<usize>>,
    },
    /// Sample predictions for each held-out window and score them.
    Score,
    /// Keep the top-psi samples per pedestrian and report ADE/FDE.
    Filter {
        /// Score samples by their true ADE instead of the model.
        #[arg(long)]
        oracle: bool,
    },
    /// Write the AUC, filtering, sample-count and psi-sweep tables.
    Eval,
    /// Draw the search curve and the score histogram.
    Plot,
}

fn run(cli: Cli) -> CliResult<()> {
    let config = RunConfig::resolve(cli.config.as_deref(), &cli.overrides)?;
    let run = Run::new(config);
    match cli.command {
        Command::Prepare => pipeline::prepare(&run).map(drop)?,
        Command::MakeNegatives => pipeline::make_test_negatives(&run)?,
        Command::Search => pipeline::search(&run).map(drop)?,
        Command::TrainFinal { spec } => pipeline::train_final(&run, spec.as_deref()).map(drop)?,
        Command::Score => pipeline::score(&run)?,
        Command::Filter { oracle } => pipeline::filter(&run, oracle).map(drop)?,
        Command::Eval => pipeline::eval(&run)?,
        Command::Plot => pipeline::plot(&run)?,
    }
    run.save_snapshot()
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("tpad: {e}");
        std::process::exit(e.exit_code());
    }
}
