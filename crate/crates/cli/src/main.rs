//! `trussqa`: truss equilibrium and compliance optimisation from the command line.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure, 4 remote sampler
//! failure.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trussqa_core::{ModelFileError, OptError, QaspError, SamplerError, TrussError};

use crate::config::SamplerKind;

#[derive(Debug, Parser)]
#[command(
    name = "trussqa",
    version,
    about = "Truss sizing optimisation with QUBO samplers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the equilibrium of one design by minimising potential energy.
    Equilibrium(RunArgs),
    /// Minimise compliance at fixed volume.
    Optimize(RunArgs),
    /// Optimise a bundled benchmark and print a summary table.
    Bench(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Model file (JSON).
    #[arg(long, conflicts_with = "case")]
    model: Option<PathBuf>,
    /// Bundled benchmark: case1, case2, case3 or case3d.
    #[arg(long)]
    case: Option<String>,
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerKind>,
    /// Remote sampler base URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Starting design: a design_final.json from an earlier run.
    #[arg(long)]
    initial: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
    Remote(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Remote(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Numerical(m) => write!(f, "solver failure: {m}"),
            Failure::Remote(m) => write!(f, "remote sampler failure: {m}"),
        }
    }
}

fn truss_failure(e: &TrussError, context: String) -> Failure {
    match e {
        TrussError::UnderConstrained(_) => Failure::Numerical(context),
        _ => Failure::Input(context),
    }
}

impl From<ModelFileError> for Failure {
    fn from(e: ModelFileError) -> Self {
        match e.truss_error() {
            Some(t) => truss_failure(t, e.to_string()),
            None => Failure::Input(e.to_string()),
        }
    }
}

fn sampler_failure(e: &SamplerError) -> Failure {
    if e.is_remote() {
        Failure::Remote(e.to_string())
    } else {
        Failure::Input(e.to_string())
    }
}

impl From<OptError> for Failure {
    fn from(e: OptError) -> Self {
        let msg = e.to_string();
        match &e {
            OptError::Truss(t) => truss_failure(t, msg),
            OptError::Qasp(QaspError::Sampler(s)) => sampler_failure(s),
            OptError::Qasp(QaspError::Encoding(_)) => Failure::Numerical(msg),
            OptError::Qasp(_) | OptError::InvalidConfig(_) => Failure::Input(msg),
            OptError::Quad(_) | OptError::EquilibriumNotConverged { .. } => Failure::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Equilibrium(args) => commands::equilibrium(&args),
        Command::Optimize(args) => commands::optimize(&args).map(|_| ()),
        Command::Bench(args) => commands::bench(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trussqa: {e}");
            ExitCode::from(e.code())
        }
    }
}
