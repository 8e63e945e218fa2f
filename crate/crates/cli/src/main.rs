//! Batch driver for spectral-Galerkin simulation, bound checking, and
//! convergence studies.
//!
//! Usage: `specgal --config run.json [--out DIR] [--seed N] [--eps E]
//! [--control FILE] [--quiet]`. The command (simulate / estimate /
//! converge) lives inside the config document. Exit codes: 0 success,
//! 2 configuration or usage error, 3 numerical-accuracy failure,
//! 4 threshold not met.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::Config;
use crate::run::{execute, exit_code, RunContext};

#[derive(Parser)]
#[command(
    name = "specgal",
    version,
    about = "Spectral-Galerkin toolkit for bilinear control systems"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Output directory (default: config's out_dir, else current dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed override for family generation.
    #[arg(long)]
    seed: Option<u64>,

    /// Target-error override for converge runs.
    #[arg(long)]
    eps: Option<f64>,

    /// Control file override (replaces the config's control source).
    #[arg(long, value_name = "PATH")]
    control: Option<PathBuf>,

    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match Config::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let out_dir = cli
        .out
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.seed.or(config.seed);
    let ctx = RunContext {
        config,
        config_path: cli.config,
        out_dir,
        seed,
        eps_override: cli.eps,
        control_override: cli.control,
        quiet: cli.quiet,
    };

    match execute(&ctx) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
