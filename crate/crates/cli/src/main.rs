//! `phasefolio`: analytic phase boundaries, Monte Carlo feasibility scans,
//! probit fits and estimation-error runs, written as CSV plot data.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::{CommonArgs, RunConfig};
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "phasefolio", version, about)]
struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase boundary r_c and the predicted estimation error.
    Analytic(CommonArgs),
    /// Feasibility probability over an (N, T, phi) grid.
    Scan(CommonArgs),
    /// Probit fits, curve intersections and contours from scan tables.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Scan CSV files.
        scans: Vec<PathBuf>,
        /// Contour probability level (repeatable).
        #[arg(long, value_name = "P")]
        contour: Vec<f64>,
    },
    /// Conditional mean and variance of q0^2 against theory.
    Qzero(CommonArgs),
    /// Measured critical points vs the analytic and an external boundary.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Intersection table written by `fit`.
        #[arg(long, value_name = "FILE")]
        intersections: Option<PathBuf>,
        /// External boundary CSV with columns alpha,r_c.
        #[arg(long, value_name = "FILE")]
        external: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> CliResult<Vec<PathBuf>> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let (name, flags, default_trials): (&'static str, RunConfig, usize) = match cli.command {
        Command::Analytic(c) => ("analytic", RunConfig::from_common(c), 1),
        Command::Scan(c) => ("scan", RunConfig::from_common(c), 1000),
        Command::Fit {
            common,
            scans,
            contour,
        } => (
            "fit",
            RunConfig {
                scan: scans,
                contour,
                ..RunConfig::from_common(common)
            },
            1,
        ),
        Command::Qzero(c) => ("qzero", RunConfig::from_common(c), 500),
        Command::Compare {
            common,
            intersections,
            external,
        } => (
            "compare",
            RunConfig {
                intersections,
                external,
                ..RunConfig::from_common(common)
            },
            1,
        ),
    };
    let mut config = flags.over(file);
    if matches!(name, "scan" | "qzero") {
        config = config.with_defaults(default_trials);
    } else {
        config.out.get_or_insert_with(|| PathBuf::from("."));
    }
    let mut run = Run::new(name, config)?;
    let result = match name {
        "analytic" => commands::analytic(&mut run),
        "scan" => commands::scan(&mut run),
        "fit" => commands::fit(&mut run),
        "qzero" => commands::qzero(&mut run),
        _ => commands::compare(&mut run),
    };
    // Outputs that were written are still described by the sidecar.
    let outputs = run.finish()?;
    result.map(|_| outputs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(outputs) => {
            for o in outputs {
                println!("{}", o.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("phasefolio: {e}");
            e.exit_code()
        }
    }
}
