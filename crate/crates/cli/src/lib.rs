//! The `cosi` command-line tool: key and roster management, a framed-TCP
//! runner for witnesses and leaders, verification, timestamping and the
//! simulator front end.

pub mod args;
pub mod commands;
pub mod files;
pub mod net;

use std::io::Write;

pub use args::Cli;
pub use files::CliError;

/// Runs one parsed command and returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> i32 {
    match commands::dispatch(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("cosi: {e}");
            e.exit_code()
        }
    }
}
