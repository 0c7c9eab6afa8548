//! `kmono`: batch front end for the kmono library.
//!
//! Exit status: 0 on success, 1 when a certificate or threshold check
//! fails, 2 for unreadable input or an invalid configuration, 3 when the
//! estimator did not converge (the best iterate is still written).

mod args;
mod config;
mod error;
mod fit;
mod output;
mod study;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, Global};
use error::{CliError, CliResult};

fn configure_threads(global: &Global) -> CliResult<()> {
    let Some(n) = global.threads else {
        return Ok(());
    };
    if n == 0 {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(())
}

fn run(cli: &Cli) -> CliResult<ExitCode> {
    configure_threads(&cli.global)?;
    let g = &cli.global;
    match &cli.command {
        Command::Fit(a) => fit::fit(g, a),
        Command::Invert(a) => fit::invert(g, a),
        Command::Conjecture(a) => study::conjecture(g, a),
        Command::GapStudy(a) => study::gap_study(g, a),
        Command::RateStudy(a) => study::rate_study(g, a),
        Command::LimitSim(a) => study::limit_sim(g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kmono: {e}");
            e.exit_code()
        }
    }
}
