use std::process::ExitCode;

use clap::Parser;
use learn2prune::cli::commands::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    ExitCode::from(run(&cli))
}
