//! Command-line and HTTP front-end of eraseek.

pub mod args;
pub mod commands;
pub mod server;

use std::process::ExitCode;

use args::{Cli, Command};
use commands::ResolvedConfig;

/// Exit codes: 0 success, 1 data or runtime error, 2 usage error.
pub const EXIT_DATA: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Resolve the command to run: either the parsed subcommand or the one
/// recorded in `--config`, optionally redirected to a new run directory.
pub fn resolve(cli: Cli) -> Result<Command, String> {
    match (cli.config, cli.command) {
        (Some(_), Some(_)) => Err("--config replaces the subcommand; give one or the other".into()),
        (None, None) => Err("a subcommand or --config is required (see --help)".into()),
        (None, Some(c)) => Ok(c),
        (Some(path), None) => {
            let mut cmd = ResolvedConfig::load(&path).map_err(|e| format!("{e:#}"))?.command;
            if let Some(out) = cli.out {
                cmd.set_out(out);
            }
            Ok(cmd)
        }
    }
}

/// Machine-readable code of an error chain, if it carries a core error.
pub fn error_code(e: &anyhow::Error) -> &'static str {
    e.chain().find_map(|c| c.downcast_ref::<eraseek_core::Error>()).map_or("RUNTIME_ERROR", eraseek_core::Error::code)
}

pub fn run_command(cmd: Command) -> ExitCode {
    let result = match &cmd {
        Command::Serve(a) => serve(a, &cmd),
        _ => commands::run(&cmd).map(|line| println!("{line}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", error_code(&e));
            ExitCode::from(EXIT_DATA)
        }
    }
}

fn serve(a: &args::ServeArgs, cmd: &Command) -> anyhow::Result<()> {
    let dir = commands::RunDir::create(&a.out)?;
    dir.write_json(commands::RESOLVED_CONFIG, &ResolvedConfig::new(cmd.clone()))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(server::serve(server::ServerConfig::from_args(a), &a.addr))
}
