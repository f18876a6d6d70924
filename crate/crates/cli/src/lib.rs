//! The `gleams` command line and its HTTP explorer service.
//!
//! [`run`] parses arguments, executes one subcommand and returns the
//! process exit code: 0 on success, 2 for usage errors, 3 when the external
//! model fails, 4 for malformed input files and 1 for other I/O failures.
//! Failures are reported on stderr as a single JSON line.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod input;
pub mod model;
pub mod service;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use error::CliError;

/// Log level variable read by [`init_logging`].
pub const LOG_ENV: &str = "GLEAMS_LOG";

pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs one invocation and returns its exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let message = rendered
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ")
                .to_string();
            return report(CliError::Usage(message));
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    log::debug!("{e:?}");
    eprintln!("{}", e.to_json_line());
    e.exit_code()
}
