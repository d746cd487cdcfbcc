//! `metapopsim`: experiment runner for metapopulation dynamics on
//! Markovian landscapes.
//!
//! Subcommands: `simulate` (finite-n stochastic run), `equilibrium`
//! (mean-field fixed point + persistence report), `persistence`
//! (threshold report only), `fig1` (survival-process sample paths),
//! `fig2` (simulation vs limiting occupancy overlay). All take a JSON
//! config plus an output directory and write a replay manifest.

mod commands;
mod config;
mod output;
mod svg;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::RunContext;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "metapopsim",
    version,
    about = "Metapopulation dynamics on Markovian landscapes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (falls back to `out_dir` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config step count.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Stochastic finite-n simulation; per-patch occupancy CSV.
    Simulate(RunArgs),
    /// Mean-field equilibrium profile and persistence report.
    Equilibrium(RunArgs),
    /// Persistence criterion r_S·r(M) only.
    Persistence(RunArgs),
    /// Survival-process sample paths (two panels).
    Fig1(RunArgs),
    /// Simulation vs limiting occupancy overlay.
    Fig2 {
        #[command(flatten)]
        run: RunArgs,
        /// Run the simulations for the full 10^5 steps.
        #[arg(long)]
        full: bool,
    },
}

fn load_context(args: &RunArgs) -> Result<RunContext> {
    let body = fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let mut config: ExperimentConfig = serde_json::from_str(&body)
        .with_context(|| format!("parsing config {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.t_steps = steps;
    }
    let errors = config.validate();
    if !errors.is_empty() {
        anyhow::bail!("invalid config:\n  {}", errors.join("\n  "));
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .context("no output directory: pass --out or set out_dir in the config")?;
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    Ok(RunContext { config, out_dir })
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(&load_context(args)?),
        Command::Equilibrium(args) => commands::cmd_equilibrium(&load_context(args)?),
        Command::Persistence(args) => commands::cmd_persistence(&load_context(args)?),
        Command::Fig1(args) => commands::cmd_fig1(&load_context(args)?),
        Command::Fig2 { run, full } => commands::cmd_fig2(&load_context(run)?, *full),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
