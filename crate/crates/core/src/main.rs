use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = isf::cli::Cli::parse();
    match isf::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
