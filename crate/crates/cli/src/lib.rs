//! Configured experiment runner behind the `randcurv` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, ValueEnum};

use crate::commands::RunContext;
use crate::config::ExperimentConfig;
use crate::output::{write_outcome, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Sample,
    P2,
    Euler,
    Linf,
    Heat,
    Bounds,
    Qsign,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::P2 => "p2",
            Command::Euler => "euler",
            Command::Linf => "linf",
            Command::Heat => "heat",
            Command::Bounds => "bounds",
            Command::Qsign => "qsign",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "randcurv", version, about = "Curvature of random conformal metrics")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `RANDCURV_SEED`, which overrides the config file.
    #[arg(long, env = "RANDCURV_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Applies overrides, runs the command and writes its artifacts.
pub fn run(cli: &Cli) -> Result<RunRecord> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(w) = cli.workers {
        anyhow::ensure!(w > 0, "--workers must be at least 1");
        config.run.workers = w;
    }
    if let Some(out) = &cli.out {
        config.run.out = out.clone();
    }
    execute(cli.command, config)
}

pub fn execute(command: Command, config: ExperimentConfig) -> Result<RunRecord> {
    let hash = config.hash();
    let ctx = RunContext {
        workers: config.run.workers,
        config,
    };
    let outcome = match command {
        Command::Sample => commands::cmd_sample(&ctx)?,
        Command::P2 => commands::cmd_p2(&ctx)?,
        Command::Euler => commands::cmd_euler(&ctx)?,
        Command::Linf => commands::cmd_linf(&ctx)?,
        Command::Heat => commands::cmd_heat(&ctx)?,
        Command::Bounds => commands::cmd_bounds(&ctx)?,
        Command::Qsign => commands::cmd_qsign(&ctx)?,
    };
    write_outcome(
        &ctx.config.run.out,
        command.name(),
        &hash,
        ctx.config.run.seed,
        ctx.workers,
        &outcome,
    )
}
