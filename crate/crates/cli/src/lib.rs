//! Command-line front end: argument and config-file resolution, experiment
//! dispatch, and byte-stable CSV/JSON output with manifest sidecars.
//!
//! Exit codes: 0 success, 2 usage, 3 validation, 4 I/O.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use clap::Parser;

pub use args::{Cli, OutputFormat, Target};
pub use error::CliError;
pub use output::RunManifest;

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::execute(&cli.command) {
        Ok(paths) => {
            for path in paths {
                println!("{}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
