//! Command-line driver for the soliton toolkit.
//!
//! Subcommands: `solve` (single fixed-charge minimization), `sweep`
//! (penalized family plus monotonicity chains), `hylomorphy` (certificate
//! for inf Lambda < E0), `evolve` (perturbation experiment), and `check`
//! (built-in invariant suite).
//!
//! Exit codes: 0 on success, 1 for configuration or environment problems,
//! 2 when a run completes but the computation itself fails (non-convergence,
//! aborted evolution, failed checks).

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "hylo",
    version,
    about = "Solitons of the Schrodinger-Poisson system by constrained minimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the energy at fixed charge and write the soliton profile
    Solve(CommonArgs),
    /// Run the penalized family over the configured weights and check the
    /// monotonicity chains
    Sweep(CommonArgs),
    /// Evaluate the hylomorphy certificate and the optional coupling
    /// threshold bracket
    Hylomorphy(CommonArgs),
    /// Evolve perturbed soliton data and record the stability verdict
    Evolve(CommonArgs),
    /// Run the built-in invariant suite and print a pass/fail table
    Check(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Output directory (overrides output_dir from the config)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for independent sweep entries (effective with
    /// --no-warm-start; other commands ignore it)
    #[arg(long, value_name = "N", default_value_t = 1)]
    threads: usize,

    /// Override the perturbation noise seed (evolve only)
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Minimize sweep entries independently instead of chaining warm starts
    #[arg(long)]
    no_warm_start: bool,
}

fn run() -> i32 {
    // HYLO_LOG selects the log level (same syntax as RUST_LOG); logs go to
    // stderr so stdout stays machine-readable.
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("HYLO_LOG"))
        .try_init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let requested = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            // Usage errors are configuration problems, not computation
            // failures, so they share exit code 1.
            return if requested { 0 } else { 1 };
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => commands::solve(args),
        Command::Sweep(args) => commands::sweep_cmd(args),
        Command::Hylomorphy(args) => commands::hylomorphy(args),
        Command::Evolve(args) => commands::evolve_cmd(args),
        Command::Check(args) => commands::check(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run());
}
