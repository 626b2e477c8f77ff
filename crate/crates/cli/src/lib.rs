//! Library side of the `ifest` command-line tool, exposed so the study
//! drivers can be tested without spawning processes.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;
pub mod stats;
pub mod study;

use args::{Cli, Command};
use error::{CliError, CliResult};

/// Environment variable capping the worker count (0 or unset = all cores).
pub const THREADS_ENV: &str = "IFEST_THREADS";

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Estimate(a) => commands::cmd_estimate(a),
        Command::Bench(a) => commands::cmd_bench(a),
        Command::Qq(a) => commands::cmd_qq(a),
        Command::Affinity(a) => commands::cmd_affinity(a),
        Command::Gen(a) => commands::cmd_gen(a),
    }
}

/// Sizes the global rayon pool from [`THREADS_ENV`].
pub fn init_threads() -> CliResult<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse::<usize>().map_err(|_| {
            CliError::usage(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'"))
        })?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::usage(e.to_string()))
}
