mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use canopy_core::Execution;
use commands::CliError;

/// Sizes the global pool from `CANOPY_THREADS`; unset or 0 leaves the default.
fn configure_threads() -> Result<Execution, CliError> {
    let threads = match std::env::var("CANOPY_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::usage(format!("CANOPY_THREADS must be a non-negative integer, got '{v}'")))?,
        Err(_) => 0,
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot size thread pool: {e}")))?;
    }
    Ok(if threads == 1 { Execution::Sequential } else { Execution::Parallel })
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let exec = configure_threads()?;
    match &cli.command {
        Command::Align(a) => commands::align(a, exec),
        Command::Rasterize(a) => commands::rasterize(a, exec),
        Command::Segment(a) => commands::segment(a),
        Command::Inventory(a) => commands::inventory(a),
        Command::Run(a) => commands::run(a, exec),
        Command::Synth(a) => commands::synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_USAGE as u8),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
