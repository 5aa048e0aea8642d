use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use roughflow::config::Format;
use roughflow::{Command, Run, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "roughflow",
    version,
    about = "Rough-path driven evolution equations: drivers, solutions, unstable manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Generate and serialise a driver.
    Driver,
    /// Solve the equation over the configured horizon.
    Solve,
    /// Sample the local unstable manifold.
    Manifold,
    /// Run the invariant suite.
    Verify,
    /// Measure local error exponents of the compensated sums.
    ProbeOrder,
}

fn run(cli: Cli) -> Result<bool> {
    let (mut config, base) = match &cli.config {
        Some(path) => (
            RunConfig::load(path)?,
            path.parent().map(PathBuf::from).unwrap_or_default(),
        ),
        None => (
            RunConfig::from_toml("", std::path::Path::new("<defaults>"))?,
            PathBuf::from("."),
        ),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = cli.out {
        config.output_dir = o;
    }
    if let Some(f) = cli.format {
        config.format = f;
    }
    let command = match cli.command {
        Cmd::Driver => Command::Driver,
        Cmd::Solve => Command::Solve,
        Cmd::Manifold => Command::Manifold,
        Cmd::Verify => Command::Verify,
        Cmd::ProbeOrder => Command::ProbeOrder,
    };
    let outcome = Run {
        command,
        config,
        base,
    }
    .execute()?;
    print!("{}", outcome.report.summary());
    Ok(outcome.report.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
