//! The `capscale` command line.
//!
//! [`run`] parses arguments, dispatches one subcommand and maps failures to
//! exit codes: 0 on success, 2 for usage, validation and I/O errors, 3 for
//! numerical failures. Errors go to stderr as a single `error[<kind>]: ...` line.

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub mod args;
pub mod commands;
pub mod failure;
pub mod output;
pub mod report;
pub mod table;

use args::{Cli, Command};
use failure::{CliResult, FailureKind};

pub fn dispatch(command: &Command, stdout: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Fit(a) => commands::fit::run(a, stdout),
        Command::Compare(a) => commands::compare::run(a, stdout),
        Command::Extrapolate(a) => commands::extrapolate::run(a, stdout),
        Command::Grid(a) => commands::landscape::grid(a, stdout),
        Command::Optimum(a) => commands::landscape::optimum(a, stdout),
        Command::Exponents(a) => commands::landscape::exponents(a, stdout),
        Command::Perturb(a) => commands::weights::perturb(a, stdout),
        Command::Measure(a) => commands::weights::measure(a, stdout),
        Command::Convert(a) => commands::weights::convert(a, stdout),
    }
}

/// Runs one invocation and returns its exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let rendered = e.render().to_string();
                    let mut lines = rendered.lines().filter(|l| !l.trim().is_empty()).peekable();
                    let mut message = Vec::new();
                    while let Some(line) = lines.next_if(|l| !l.starts_with("Usage:") && !l.starts_with("For more information")) {
                        message.push(line.trim().trim_start_matches("error: "));
                    }
                    let _ = writeln!(stderr, "error[{}]: {}", FailureKind::Usage.tag(), message.join(" "));
                    for line in lines {
                        let _ = writeln!(stderr, "{line}");
                    }
                    FailureKind::Usage.exit_code()
                }
            };
        }
    };
    match dispatch(&cli.command, stdout) {
        Ok(()) => 0,
        Err(failure) => {
            let _ = writeln!(stderr, "{}", failure.line());
            failure.kind.exit_code()
        }
    }
}
