//! Experiment orchestration for the Klein-Gordon laboratory: configuration,
//! one subcommand per experiment family, deterministic runs, delimited-text
//! outputs.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

/// Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 incomplete.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INCOMPLETE: i32 = 4;

#[derive(Parser)]
#[command(name = "nlkg", about = "Desk-scale laboratory for the 1D focusing nonlinear Klein-Gordon equation near its ground state", version)]
pub struct Cli {
    /// Configuration file (TOML); defaults are built in.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for tables and logs.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Seed for sampled test ensembles.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scale every experiment horizon by this factor.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub horizon_scale: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Eigenvalues, resonance verdicts, and the spectral-measure table.
    Spectral,
    /// Weighted local-decay ratios against the horizon.
    DecayProbe,
    /// A single trajectory with its scalar series and snapshots.
    Evolve,
    /// The nine-set outcome scan over the default data families.
    Scan,
    /// Unstable-direction launches and ejection-rate fits.
    Eject,
    /// One-pass audit over the scan ensemble.
    Onepass,
    /// Threshold shooting along the ρ-direction families.
    Shoot,
    /// Center-stable graph sweep and tangency regression.
    Manifold,
    /// Aggregate acceptance checks into one pass/fail table.
    Report,
}

pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            commands::classify_exit(&e)
        }
    }
}
