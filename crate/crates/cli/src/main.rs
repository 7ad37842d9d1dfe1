//! `infoflow` command-line experiments.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use infoflow::Error;

#[derive(Debug, Parser)]
#[command(name = "infoflow", version, about = "Particle-flow variational inference experiments")]
pub struct Cli {
    /// Seed for every random stream in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Kernel bandwidth policy: median, median-dist, median-log or fixed:<h>.
    /// Defaults to median, or the preset's fixed h for approx2d.
    #[arg(long, global = true)]
    pub bandwidth: Option<String>,

    /// Drift rule for the particle flow: info or stein.
    #[arg(long, global = true, default_value = "info")]
    pub drift: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flow a cloud toward a 1D target and record its trajectory.
    Flow1d(commands::flow1d::Args),
    /// Approximate a 2D target and score the result.
    Approx2d(commands::approx2d::Args),
    /// Goodness-of-fit test of a sample against a target.
    Gof(commands::gof::Args),
    /// Train a latent variable model with particle EM.
    EmTrain(commands::em::Args),
    /// Predict held-out columns with a trained model.
    Predict(commands::predict::Args),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::UnknownName { .. } | Error::Model(_) => 2,
        Error::Io(_) | Error::Json(_) => 3,
        Error::Diverged { .. } | Error::Numeric(_) => 4,
        Error::Recording(_) | Error::Sampler(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
