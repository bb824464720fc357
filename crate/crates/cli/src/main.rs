mod cli;
mod commands;
mod formats;
mod pad;
mod render;

use clap::error::ErrorKind;
use clap::Parser;

/// Outcomes that map to non-data exit codes. Anything else that fails is a
/// data error (exit 2).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("solver stopped at relative residual {0:.3e} without reaching tolerance; the output was still written")]
    NonConvergence(f64),
}

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<CliError>() {
        Some(CliError::Usage(_)) => 1,
        Some(CliError::NonConvergence(_)) => 3,
        None => 2,
    }
}

fn main() {
    let parsed = match cli::Cli::try_parse() {
        Ok(parsed) => parsed,
        Err(e) => {
            // Help and version are successes; every other parse failure is
            // a usage error (this tool reserves exit 2 for data errors).
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match parsed.command {
        cli::Command::Complete(args) => commands::cmd_complete(args),
        cli::Command::Synth(args) => commands::cmd_synth(args),
        cli::Command::Eval(args) => commands::cmd_eval(args),
        cli::Command::Simulate(args) => commands::cmd_simulate(args),
        cli::Command::Render(args) => commands::cmd_render(args),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}
