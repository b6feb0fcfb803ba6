use std::process::ExitCode;

use clap::Parser;
use mesc_sim::cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mesc-sim: {e}");
            ExitCode::FAILURE
        }
    }
}
