use std::process::ExitCode;

use clap::Parser;
use featgp::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("featgp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
