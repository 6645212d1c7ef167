//! Command-line driver: configuration, capacity guards, manifests and dispatch.

pub mod config;
pub mod output;
mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Params;
pub use run::{execute, resolve, Plan, RunSummary};

#[derive(Debug, Clone, PartialEq, Eq, Copy)]
pub enum Kind {
    Basis,
    Scars,
    RandomMon,
    PeriodicMon,
    ScarWeight,
    Rephase,
    Velocity,
    SteadyScan,
    Fss,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Basis => "basis",
            Kind::Scars => "scars",
            Kind::RandomMon => "random-mon",
            Kind::PeriodicMon => "periodic-mon",
            Kind::ScarWeight => "scar-weight",
            Kind::Rephase => "rephase",
            Kind::Velocity => "velocity",
            Kind::SteadyScan => "steady-scan",
            Kind::Fss => "fss",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pxp", version, about = "Monitored dynamics of the PXP spin chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate the constrained basis.
    Basis(RunArgs),
    /// Identify the scar eigenstates.
    Scars(RunArgs),
    /// Random-time Born monitoring ensemble.
    RandomMon(RunArgs),
    /// Measurements after every revival period.
    PeriodicMon(RunArgs),
    /// Scar weight after one projection, as a function of its time.
    ScarWeight(RunArgs),
    /// Scar phases and amplitudes under cumulative Néel-pattern projections.
    Rephase(RunArgs),
    /// Entropy growth before and after a single projection.
    Velocity(RunArgs),
    /// Long-time entropy over sizes and measurement rates.
    SteadyScan(RunArgs),
    /// Finite-size-scaling collapse of a steady-state table.
    Fss(RunArgs),
}

impl Command {
    pub fn split(self) -> (Kind, RunArgs) {
        match self {
            Command::Basis(a) => (Kind::Basis, a),
            Command::Scars(a) => (Kind::Scars, a),
            Command::RandomMon(a) => (Kind::RandomMon, a),
            Command::PeriodicMon(a) => (Kind::PeriodicMon, a),
            Command::ScarWeight(a) => (Kind::ScarWeight, a),
            Command::Rephase(a) => (Kind::Rephase, a),
            Command::Velocity(a) => (Kind::Velocity, a),
            Command::SteadyScan(a) => (Kind::SteadyScan, a),
            Command::Fss(a) => (Kind::Fss, a),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON parameter file or a previous run manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for trajectory ensembles (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory receiving the CSV files and the manifest.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Explicit path for the primary output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub params: Params,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] pxp_core::Error),
    #[error("postselection dead end: {0}")]
    DeadEnd(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;
pub const EXIT_DEAD_END: i32 = 5;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use pxp_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_OTHER,
            CliError::DeadEnd(_) => EXIT_DEAD_END,
            CliError::Core(e) => match e.root() {
                E::Argument(_) | E::Lookup { .. } => EXIT_CONFIG,
                E::Capacity { .. } => EXIT_CAPACITY,
                E::Convergence { .. } | E::Optimizer { .. } => EXIT_CONVERGENCE,
                E::ImpossibleOutcome { .. } => EXIT_DEAD_END,
                _ => EXIT_OTHER,
            },
        }
    }
}
