//! Command-line front-end: parse experiment configs, dispatch to the library,
//! emit traces, reports, and reproducibility manifests.
//!
//! Exit-code contract: 0 success, 1 configuration or runtime failure, 2
//! scientific negative (not tangent, condition not found, viability violated,
//! or a failed verification), so sweeps can script against outcomes.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "mfv",
    about = "Viability machinery for measure-valued dynamics on the flat torus",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact 1-Wasserstein distance between two measure files.
    Metric {
        /// First measure (JSON).
        a: PathBuf,
        /// Second measure (JSON).
        b: PathBuf,
    },
    /// Transport metric between two lifted measures over the same base.
    LiftedMetric {
        /// First lifted measure (JSON).
        a: PathBuf,
        /// Second lifted measure (JSON).
        b: PathBuf,
        /// Order of the metric (1 or 2).
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
    /// Tangency ladder for a lifted measure against a constraint set.
    Tangency {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pointwise viability condition check at a measure.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Forward or viability-tracking solve with trace outputs.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-derive the invariants of a finished run directory.
    Verify {
        #[arg(long)]
        run: PathBuf,
    },
}

/// Dispatch a parsed invocation; the returned integer is the process exit
/// code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    match &cli.command {
        Command::Metric { a, b } => commands::metric(a, b),
        Command::LiftedMetric { a, b, p } => commands::lifted_metric_cmd(a, b, *p),
        Command::Tangency { config, out, seed } => {
            commands::tangency(config, out.as_deref(), *seed)
        }
        Command::Check { config, out, seed } => commands::check(config, out.as_deref(), *seed),
        Command::Solve { config, out, seed } => commands::solve(config, out, *seed),
        Command::Verify { run } => commands::verify(run),
    }
}
