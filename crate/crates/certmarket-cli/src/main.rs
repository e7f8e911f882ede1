//! `certmarket`: price optimization, budget-constrained purchase
//! solving, demand estimation, and sales analytics for online-course
//! certificate markets.
//!
//! Every run is driven by a JSON config file plus flag overrides, logs
//! the fully resolved configuration to stderr, and stamps each output
//! file with a SHA-256 hash of that configuration. Identical configs
//! and seeds produce byte-identical outputs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::TieRuleName;

/// Exit code 2 marks a configuration problem (flags, config file,
/// inline specs); exit code 3 marks a data problem (files the config
/// points at, or failures writing results).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> CliError {
        CliError::Config(message.into())
    }

    pub fn data(message: impl Into<String>) -> CliError {
        CliError::Data(message.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "certmarket",
    version,
    about = "Certificate-market pricing, purchasing, estimation, and sales analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the profit-maximizing certificate price for a population.
    Optimize(CommonArgs),
    /// Solve budget-constrained multi-course purchases and price them.
    Budget(CommonArgs),
    /// Estimate the willingness-to-pay survival curve from experiments.
    Estimate(CommonArgs),
    /// Summarize sales data: buckets, concentration, payment rates.
    Analyze(CommonArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: PathBuf,
    /// Seed for all randomized steps.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing (default: config value,
    /// then the current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// How indifferent users break ties: weak buys, strict declines.
    #[arg(long, value_enum)]
    pub tie_rule: Option<TieRuleName>,
    /// Marginal cost per certificate, e.g. 20.00.
    #[arg(long)]
    pub marginal_cost: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Optimize(args) => commands::optimize(args),
        Command::Budget(args) => commands::budget(args),
        Command::Estimate(args) => commands::estimate(args),
        Command::Analyze(args) => commands::analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
