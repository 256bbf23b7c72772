mod config;
mod experiments;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{resolve, Experiment, Overrides};
use experiments::{run, RunError};

/// Closure experiments on 1D advection, diffusion and Burgers problems.
///
/// Exit status: 0 when every check passes, 1 on a failed check or numerical
/// failure, 2 on a configuration error.
#[derive(Parser, Debug)]
#[command(name = "mzvms", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact and orthogonal fine-scale Green's functions of steady advection-diffusion
    Greens(Overrides),
    /// Sweep of the tau-model versus upwind-flux identity, plus the S2/S1 table
    UpwindEquiv(Overrides),
    /// Exact linear memory against the full solve, convergence in the panel count
    LinearMemory(Overrides),
    /// Fourier-Galerkin Burgers with a closure, a no-closure run and a resolved reference
    Burgers(Overrides),
    /// Periodic DG advection with a closure
    Advect(Overrides),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, overrides) = match cli.command {
        Command::Greens(o) => (Experiment::Greens, o),
        Command::UpwindEquiv(o) => (Experiment::UpwindEquiv, o),
        Command::LinearMemory(o) => (Experiment::LinearMemory, o),
        Command::Burgers(o) => (Experiment::Burgers, o),
        Command::Advect(o) => (Experiment::Advect, o),
    };
    let cfg = match resolve(experiment, &overrides) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("configuration error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg, &overrides.out) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            for c in summary.checks.iter().filter(|c| !c.pass) {
                eprintln!(
                    "check failed: {} = {:e} (tolerance {:e})",
                    c.name, c.value, c.tolerance
                );
            }
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(RunError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Failed(msg)) => {
            eprintln!("run failed: {msg}");
            ExitCode::from(1)
        }
    }
}
