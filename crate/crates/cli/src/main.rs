use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = rmc_cli::args::Cli::parse();
    match rmc_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
