mod args;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use run::CliError;

fn main() -> ExitCode {
    ExitCode::from(run_cli(std::env::args_os()))
}

/// Parses `argv` and runs it, returning the process exit code.
fn run_cli<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let command = match (cli.config, cli.command) {
        (Some(path), None) => run::read_sidecar(&path)?,
        (None, Some(cmd)) => cmd,
        (Some(_), Some(_)) => return Err(CliError::Usage("--config replaces the subcommand; give one or the other".into())),
        (None, None) => return Err(CliError::Usage("a subcommand or --config is required (see --help)".into())),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("--workers {}: {e}", cli.workers)))?;
    pool.install(|| run::dispatch(command))
}
