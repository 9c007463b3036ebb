//! Command-line front end: `qmatrix <command> [flags]`.
//!
//! Every command writes into `runs/<name>/` (see `--out-dir` and `--name`),
//! echoes its effective arguments into the run's `config.json` and appends
//! to `log.txt`. Exit status is 0 on success, 2 when a run completed with
//! some failed items or candidates, and 1 on error.

mod args;
mod commands;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;

/// Outcome of a command that did not error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    Partial,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

/// Parses `argv` (program name first) and runs the command.
pub fn execute<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match args::expand_config_file(argv) {
        Ok(a) => a,
        Err(message) => {
            eprintln!("error: {message}");
            return EXIT_ERROR;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_ERROR,
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(Status::Complete) => EXIT_OK,
        Ok(Status::Partial) => EXIT_PARTIAL,
        Err(message) => {
            eprintln!("error: {message}");
            EXIT_ERROR
        }
    }
}
