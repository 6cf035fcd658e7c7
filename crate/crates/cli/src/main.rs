//! `nht`: kernel evaluation, heat-trace differences, expansion fits and the
//! verification matrix from the command line.

mod commands;
mod io;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{FitArgs, KernelArgs, TraceArgs, VerifyArgs};
use crate::io::CliError;

#[derive(Parser, Debug)]
#[command(name = "nht", version, about = "Heat kernels and heat-trace asymptotics of non-local operators")]
struct Cli {
    /// Quadrature configuration (JSON); defaults are used when absent.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the transition density at one time and several radii.
    Kernel(KernelArgs),
    /// Compute trace differences on a time grid by several methods.
    Trace(TraceArgs),
    /// Fit the two-term small-time expansion to a trace CSV.
    Fit(FitArgs),
    /// Run the inequality and identity witnesses.
    Verify(VerifyArgs),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("NHT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::usage(format!("NHT_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    init_threads()?;
    let cfg = io::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Kernel(a) => commands::kernel(&a, &cfg),
        Command::Trace(a) => commands::trace(&a, &cfg),
        Command::Fit(a) => commands::fit(&a, &cfg),
        Command::Verify(a) => commands::verify(&a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("nht: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
