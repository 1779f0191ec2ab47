use clap::Parser;
use efs::cli::{run, Cli};

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("efs: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
