//! `divscan`: weight-space feature diversity, transferability statistics and
//! toy controlled-label-injection runs from the command line.
//!
//! Every command writes one report and a `<report>.manifest.json` beside it,
//! then prints the report path on stdout. Exit status is 0 on success, 1 on
//! I/O failure and 2 on invalid input or arguments.

mod args;
mod commands;
mod failure;
mod manifest;
mod tables;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::failure::Failure;

const THREADS_VAR: &str = "DIVSCAN_THREADS";

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Failure::Invalid(format!(
            "{THREADS_VAR} must be a non-negative integer, got '{raw}'"
        ))
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Invalid(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| commands::run(&cli));
    match result {
        Ok(report) => {
            println!("{}", report.display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("divscan: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
