//! `nodepred`: synthesize graphs, train and evaluate new-node predictors,
//! check gradients, sweep settings and replay recorded runs.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid arguments or
//! configuration mismatch, 3 meaningless training run, 4 inconclusive
//! evaluation.

mod args;
mod commands;
mod manifest;
mod sweep;

use clap::Parser;

use crate::args::Cli;

/// Parses `argv` (program name first), runs the command and returns the
/// exit code.
pub fn execute(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let args = argv.into_iter().skip(1).collect();
    match commands::dispatch(cli, args) {
        Ok(outcome) => outcome.code(),
        Err(e) => {
            eprintln!("error: {e}");
            commands::error_code(&e)
        }
    }
}

fn main() {
    std::process::exit(execute(std::env::args().collect()));
}
