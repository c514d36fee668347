//! Command-line driver: classical flows, midpoint geometry, Airy-layer
//! predictions, exact spectral references, HK propagators and comparisons.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::Context;
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "wigner-airy",
    version,
    about = "Smoothed spectral Wigner functions near an energy shell"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Turn soft diagnostics into hard failures.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trajectories, monodromies and actions.
    Flow(Common),
    /// Midpoint-map inversion and dt/dE.
    Midpoint(Common),
    /// Semiclassical Airy-layer predictions.
    Predict(Common),
    /// Exact smoothed spectral Wigner values.
    Exact(Common),
    /// HK Wigner propagator against stationary phase.
    Hk(Common),
    /// Prediction against exact reference.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Fit the Airy prefactor on oscillator data and freeze it in a ledger.
        #[arg(long)]
        calibrate: bool,
    },
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let (common, calibrate) = match &cli.command {
        Command::Flow(c) | Command::Midpoint(c) | Command::Predict(c) | Command::Exact(c) | Command::Hk(c) => {
            (c, false)
        }
        Command::Compare { common, calibrate } => (common, *calibrate),
    };
    let config = RunConfig::load(&common.config)?;
    let ctx = Context::new(config, common.out.clone(), common.strict)?;
    match cli.command {
        Command::Flow(_) => commands::cmd_flow(&ctx).map(drop),
        Command::Midpoint(_) => commands::cmd_midpoint(&ctx).map(drop),
        Command::Predict(_) => commands::cmd_predict(&ctx).map(drop),
        Command::Exact(_) => commands::cmd_exact(&ctx).map(drop),
        Command::Hk(_) => commands::cmd_hk(&ctx).map(drop),
        Command::Compare { .. } => commands::cmd_compare(&ctx, calibrate).map(drop),
    }
}
