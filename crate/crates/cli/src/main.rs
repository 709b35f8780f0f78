//! `robustlt`: theory checks, intensity schedules, synthetic data, training
//! and evaluation for class-balanced adversarial training on long-tailed data.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod error;
mod eval;
mod gen_data;
mod output;
mod report;
mod schedule;
mod theory;
mod train;

use error::CliError;
use output::Ctx;

#[derive(Debug, Parser)]
#[command(
    name = "robustlt",
    version,
    about = "Robust long-tail training toolkit"
)]
struct Cli {
    /// Seed for every random draw [default: config file, else 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// `key = value` config file, same keys as `train --set`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form risks, optimal bias and feasible intensities for the binary Gaussian task.
    Theory(theory::TheoryArgs),
    /// Per-class attack intensities for a class profile.
    Schedule(schedule::ScheduleArgs),
    /// Generate a long-tailed synthetic training set and a balanced test set.
    GenData(gen_data::GenDataArgs),
    /// Adversarially train a classifier.
    Train(train::TrainArgs),
    /// Natural and robust per-class accuracy of a trained model.
    Eval(eval::EvalArgs),
    /// Compare two runs.
    Report(report::ReportArgs),
}

fn run(cli: &Cli) -> error::Result<()> {
    let argv = std::env::args().collect();
    let ctx = Ctx::new(cli.out_dir.clone(), cli.seed, cli.config.as_deref(), argv)?;
    match &cli.command {
        Command::Theory(a) => theory::run(a, &ctx),
        Command::Schedule(a) => schedule::run(a, &ctx),
        Command::GenData(a) => gen_data::run(a, &ctx),
        Command::Train(a) => train::run(a, &ctx),
        Command::Eval(a) => eval::run(a, &ctx),
        Command::Report(a) => report::run(a, &ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("\nFor more information, try 'robustlt --help'.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
