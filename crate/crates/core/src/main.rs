use std::process::ExitCode;

use clap::Parser;
use oi_lab::cli::{self, Cli, Outcome};

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = std::panic::catch_unwind(|| {
        cli::configure_threads()?;
        cli::run(&args)
    });
    let code = match result {
        Ok(Ok(Outcome::Pass)) => cli::EXIT_PASS,
        Ok(Ok(Outcome::Fail)) => cli::EXIT_VERDICT,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
        Err(_) => cli::EXIT_INTERNAL,
    };
    ExitCode::from(code as u8)
}
