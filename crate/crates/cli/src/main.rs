//! `collinear`: quantities, graphs, sampling reports and scans for the
//! collinear three-body problem near triple collision.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collinear::Error;

use crate::commands::{exit_code, Failure};
use crate::config::{MassSpec, RunConfig};

#[derive(Parser)]
#[command(name = "collinear", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Three positive masses `a,b,c`, or `equal`.
    #[arg(long, global = true)]
    masses: Option<String>,

    /// Integrator tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    max_pullbacks: Option<u32>,

    /// Mass grid for `scan`: `simplex:K` or `a,b,c;a,b,c;...`.
    #[arg(long, global = true)]
    grid: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Compute the alternating lengths and pullback counts.
    Quantities,
    /// Emit the template graphs and cross-check them against the partition.
    Graph,
    /// Sample itineraries and check them against the graphs.
    Validate,
    /// Dump seed arcs, pullback boundaries and regions as plot data.
    Trace,
    /// Compute quantities over a grid of masses.
    Scan,
}

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.masses {
        config.masses = MassSpec::parse(m)?;
    }
    if let Some(t) = cli.tol {
        config.tolerance = t;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.out {
        config.out = o.clone();
    }
    if let Some(n) = cli.max_pullbacks {
        config.max_pullbacks = n;
    }
    if let Some(g) = &cli.grid {
        config.grid = Some(g.clone());
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error [config]: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let result = match cli.command {
        Command::Quantities => commands::cmd_quantities(&config),
        Command::Graph => commands::cmd_graph(&config),
        Command::Validate => commands::cmd_validate(&config),
        Command::Trace => commands::cmd_trace(&config),
        Command::Scan => commands::cmd_scan(&config),
    };
    match result {
        Ok(outcome) => {
            match &outcome {
                commands::Outcome::Ok => {}
                commands::Outcome::Inconsistent => eprintln!("partition graphs disagree with the templates"),
                commands::Outcome::Counterexamples(n) => eprintln!("{n} counterexample words found"),
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(Failure { stage, error }) => {
            eprintln!("error [{stage}]: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}
