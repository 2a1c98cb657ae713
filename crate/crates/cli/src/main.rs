#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod config;
mod error;

use args::{Cli, Command};
use error::CliError;

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DPMS_THREADS") else {
        return Ok(());
    };
    let k: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| CliError::Config(format!("DPMS_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Select(a) => commands::select(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Validate(a) => commands::validate(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpms: {e}");
            ExitCode::from(e.code())
        }
    }
}
