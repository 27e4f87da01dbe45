//! `boxwalk`: analytic and simulated transport toward a goal wall.
//!
//! Exit codes: 0 success, 2 bad input, 3 numerical failure, 4 simulation
//! estimate unreliable (more than 1% of walkers censored).

mod commands;
mod config;
mod output;
mod species;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn unreliable(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<boxwalk::Error> for CliError {
    fn from(e: boxwalk::Error) -> Self {
        if e.is_numerical() {
            Self::numerical(e.to_string())
        } else {
            Self::input(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "boxwalk", version, about = "Advection-diffusion toward a goal wall: analytic curves and walker simulations")]
struct Cli {
    /// JSON file with default values for a, b, x0, y0, p, s, v, D, delta, walkers, seed, t_max
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean time to reach the goal wall
    Mfpt(commands::MfptArgs),
    /// Peclet number and regime, or Peclet number from a measured time ratio
    Peclet(commands::PecletArgs),
    /// Occupancy density on a grid at given times, or the steady state
    Density(commands::DensityArgs),
    /// Time by which half of the walkers have reached the goal wall
    Median(commands::MedianArgs),
    /// Arrival order statistics for several species
    Race(commands::RaceArgs),
    /// Lattice walker simulation
    Simulate(commands::SimulateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = config::ConfigFile::load(cli.config.as_deref()).and_then(|cfg| match &cli.command {
        Command::Mfpt(a) => commands::mfpt(a, &cfg),
        Command::Peclet(a) => commands::peclet(a, &cfg),
        Command::Density(a) => commands::density(a, &cfg),
        Command::Median(a) => commands::median(a, &cfg),
        Command::Race(a) => commands::race(a, &cfg),
        Command::Simulate(a) => commands::simulate(a, &cfg),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("boxwalk: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
