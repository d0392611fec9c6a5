mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{CliError, Overrides};

#[derive(Parser)]
#[command(
    name = "hiergp",
    version,
    about = "Convergence laboratory for GP emulators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a design and report its geometry.
    Design(Flags),
    /// Fit a GP to data and predict on a grid.
    Fit(Flags),
    /// Run an N-sweep and compare empirical against predicted rates.
    Convergence(Flags),
    /// Sweep posterior approximations of an inverse problem.
    Invert(Flags),
}

#[derive(clap::Args)]
struct Flags {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory of the config file.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for study cells.
    #[arg(long, value_name = "K")]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = match cli.command {
        Command::Design(f) => ("design", f),
        Command::Fit(f) => ("fit", f),
        Command::Convergence(f) => ("convergence", f),
        Command::Invert(f) => ("invert", f),
    };
    match run(name, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hiergp {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(name: &str, flags: Flags) -> Result<(), CliError> {
    if let Some(k) = flags.jobs {
        if k == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Other(e.into()))?;
    }
    let config = flags
        .config
        .ok_or_else(|| CliError::Validation("--config PATH is required".into()))?;
    let overrides = Overrides {
        seed: flags.seed,
        out: flags.out,
    };
    let run = config::load(name, &config, &overrides)?;
    match name {
        "design" => commands::design::run(&run),
        "fit" => commands::fit::run(&run),
        "convergence" => commands::convergence::run(&run),
        "invert" => commands::invert::run(&run),
        _ => unreachable!(),
    }
}
