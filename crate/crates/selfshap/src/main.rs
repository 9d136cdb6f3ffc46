use std::process::ExitCode;

use clap::Parser;

use selfshap::cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match selfshap::commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
