//! `fbctl`: runs feedback-policy experiments from a JSON configuration and
//! writes CSV results.

pub mod commands;
pub mod config;
pub mod output;

use clap::{Parser, Subcommand};
use commands::Context;
use config::ExperimentConfig;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Core(#[from] fbctl_core::Error),
    #[error("verification failed:\n{0}")]
    Verification(String),
}

impl CliError {
    /// 1 for failed verification, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fbctl", version, about = "Adaptive CSI feedback experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `fbctl-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Report structure violations without failing.
    #[arg(long, global = true)]
    pub allow_violations: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Solve the budgeted MDP and write the policy table.
    SolvePolicy,
    /// Run the network simulation for each configured scheme.
    Simulate,
    /// Search the water-filling threshold for block fading.
    Waterfill,
    /// Split a receiver's budget across interferers at different distances.
    AllocateRates,
    /// Check the threshold structure of solved policies.
    VerifyStructure,
}

/// Loads the configuration, applies the command-line overrides and runs.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut config = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if cli.common.threads == Some(0) {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    let out = cli
        .common
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("fbctl-out"));
    commands::prepare_out(&out)?;
    let ctx = Context {
        config,
        out,
        allow_violations: cli.common.allow_violations,
    };
    let work = || match cli.command {
        Command::SolvePolicy => commands::solve_policy(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::Waterfill => commands::waterfill(&ctx),
        Command::AllocateRates => commands::allocate_rates(&ctx),
        Command::VerifyStructure => commands::verify_structure(&ctx),
    };
    match cli.common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(work),
        None => work(),
    }
}
