use std::process::ExitCode;

use clap::Parser;
use eraseek_cli::args::Cli;
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(&cli.log));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match eraseek_cli::resolve(cli) {
        Ok(cmd) => eraseek_cli::run_command(cmd),
        Err(msg) => {
            eprintln!("error[USAGE]: {msg}");
            ExitCode::from(eraseek_cli::EXIT_USAGE)
        }
    }
}
