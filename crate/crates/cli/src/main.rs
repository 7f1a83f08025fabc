use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use commands::{CheckFailed, GradcheckArgs, SynthArgs};
use config::Overrides;

/// Train and evaluate DI-optimized kernel feature maps.
#[derive(Debug, Parser)]
#[command(name = "dikernel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a feature map and write it with its training records
    Train(Overrides),
    /// Fit ridge regression on a saved map's features and report metrics
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        /// Map artifact written by `train`
        #[arg(long)]
        map_file: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on a small instance
    Gradcheck(GradcheckArgs),
    /// Train and evaluate once per map size
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated map sizes
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
    /// Write a synthetic Gaussian-blob dataset in LIBSVM format
    Synth(SynthArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<CheckFailed>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<dikernel::Error>() {
            return if e.is_numerical() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(o) => commands::cmd_train(o),
        Command::Eval {
            overrides,
            map_file,
        } => commands::cmd_eval(overrides, map_file),
        Command::Gradcheck(args) => commands::cmd_gradcheck(args),
        Command::Sweep { overrides, sizes } => commands::cmd_sweep(overrides, sizes),
        Command::Synth(args) => commands::cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
