use std::io;
use std::process::ExitCode;

use clap::Parser;
use oqwlab::cli::{execute, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OQWLAB_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli, &mut io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
