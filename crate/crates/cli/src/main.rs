//! Command-line surface for the shrinkda toolkit.
//!
//! Subcommands: `train`, `predict`, `rank`, `select`, `crossval`,
//! `simulate`. Data errors exit with code 1 and a single-line
//! machine-parsable message on stderr; argument errors exit with code 2.

mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = err.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: {line}");
            ExitCode::FAILURE
        }
    }
}
