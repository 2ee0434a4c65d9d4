use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match armtail::cli::run(armtail::cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
