//! `heliqsim`: electrostatics, spectra, voltage optimization and λ sweeps
//! for two electrons in an electrode-defined double well.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use commands::Target;
use config::{RunConfig, SweepGrid};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("electrostatics failed: {0}")]
    Electrostatics(String),
    #[error("invalid double well: {0}")]
    InvalidWell(String),
    #[error("optimization fell short: {0}")]
    Shortfall(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Electrostatics(_) => 2,
            CliError::InvalidWell(_) => 3,
            CliError::Shortfall(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "heliqsim", version, about = "Two-electron double-well simulator")]
struct Cli {
    /// Worker threads for Laplace solves, gradients and sweep points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Multiplies the Coulomb strength; 0 switches the interaction off.
    #[arg(long, global = true)]
    kappa_scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the electrostatics and write the coupling table.
    SolveLaplace {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate one voltage set: spectrum, entropies and densities.
    Spectrum {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        voltages: PathBuf,
    },
    /// Optimize voltages for configuration I or III.
    Optimize {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long)]
        seed_voltages: Option<PathBuf>,
    },
    /// Sweep V(λ) = (1 − λ) V_I + λ V_III.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        vi: PathBuf,
        #[arg(long)]
        viii: PathBuf,
        /// λ grid as min:max:points; overrides the configuration.
        #[arg(long)]
        lambda: Option<String>,
    },
}

fn load(config: Option<&PathBuf>, cli: &Cli) -> Result<(RunConfig, String), CliError> {
    let mut cfg = RunConfig::load(config.map(PathBuf::as_path))?;
    if let Some(k) = cli.kappa_scale {
        cfg.pipeline.kappa_scale = k;
    }
    cfg.validate()?;
    let hash = cfg.hash();
    Ok((cfg, hash))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    match &cli.command {
        Command::SolveLaplace { config } => {
            let (cfg, hash) = load(config.as_ref(), cli)?;
            commands::solve_laplace(&cfg, &hash)
        }
        Command::Spectrum { config, voltages } => {
            let (cfg, hash) = load(config.as_ref(), cli)?;
            commands::spectrum(&cfg, &hash, voltages)
        }
        Command::Optimize {
            config,
            target,
            seed_voltages,
        } => {
            let (cfg, hash) = load(config.as_ref(), cli)?;
            commands::optimize(&cfg, &hash, *target, seed_voltages.as_deref())
        }
        Command::Sweep {
            config,
            vi,
            viii,
            lambda,
        } => {
            let (mut cfg, _) = load(config.as_ref(), cli)?;
            if let Some(l) = lambda {
                cfg.sweep = SweepGrid::parse(l)?;
                cfg.validate()?;
            }
            let hash = cfg.hash();
            commands::sweep_cmd(&cfg, &hash, vi, viii, cfg.sweep)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
