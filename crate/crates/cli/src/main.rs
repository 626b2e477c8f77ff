use std::process::ExitCode;

use clap::Parser;
use ifest_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = ifest_cli::init_threads().and_then(|()| ifest_cli::run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
