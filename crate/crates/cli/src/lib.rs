//! Command-line front end: space-filling designs, emulator fitting and
//! prediction, calibration runs driven by a config file, and plot-ready
//! report tables.

mod calibrate;
pub mod config;
mod design;
mod fit;
pub mod io;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use emucal::emulator::TrendSpec;
use emucal::kernel::KernelKind;

pub use calibrate::{calibrate, RunManifest, MANIFEST_FILE};
pub use config::{config_hash, load_config, SimulatorConfig, WorkflowConfig};
pub use design::design;
pub use fit::{fit, predict};
pub use report::report;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    #[error("{0}")]
    Config(String),
    /// Missing or malformed data files (exit 2).
    #[error("{0}")]
    Data(String),
    /// Numerical failure in fitting or sampling (exit 3).
    #[error("{0}")]
    Numerical(String),
    /// Emulator-quality gate or MCMC diagnostics failed (exit 4).
    #[error("{0}")]
    Gate(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Gate(_) => 4,
        }
    }
}

impl From<emucal::Error> for CliError {
    fn from(e: emucal::Error) -> Self {
        use emucal::Error as E;
        let message = e.to_string();
        match e.root() {
            E::IllConditioned { .. } | E::RankDeficient | E::FitFailed(_) | E::NumericalBreakdown(_) => {
                CliError::Numerical(message)
            }
            E::Gate(_) | E::Diagnostics(_) => CliError::Gate(message),
            _ => CliError::Data(message),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "emucal",
    version,
    about = "Gaussian-process emulation and Bayesian calibration of computer models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignKind {
    Lhs,
    Maximin,
    Sobol,
    Halton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Exponential,
    PowerExponential,
    Gaussian,
    Matern32,
    Matern52,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Linear => KernelKind::Linear,
            KernelArg::Exponential => KernelKind::Exponential,
            KernelArg::PowerExponential => KernelKind::PowerExponential,
            KernelArg::Gaussian => KernelKind::Gaussian,
            KernelArg::Matern32 => KernelKind::Matern32,
            KernelArg::Matern52 => KernelKind::Matern52,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrendArg {
    Constant,
    Linear,
}

impl From<TrendArg> for TrendSpec {
    fn from(t: TrendArg) -> Self {
        match t {
            TrendArg::Constant => TrendSpec::Constant,
            TrendArg::Linear => TrendSpec::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mle,
    Cv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a design over a parameter space file.
    Design {
        #[arg(long, value_enum)]
        method: DesignKind,
        #[arg(long)]
        n: usize,
        /// TOML or JSON file with `names`, `lower` and `upper` arrays.
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random restarts for the maximin search.
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        /// Leading sequence points to skip (Sobol, Halton).
        #[arg(long, default_value_t = 0)]
        skip: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an emulator to a training CSV and report its leave-one-out accuracy.
    Fit {
        #[arg(long)]
        training: PathBuf,
        /// Output column; every other column is an input.
        #[arg(long)]
        output: String,
        #[arg(long, value_enum, default_value = "gaussian")]
        kernel: KernelArg,
        #[arg(long, value_enum, default_value = "constant")]
        trend: TrendArg,
        #[arg(long, value_enum, default_value = "mle")]
        method: MethodArg,
        /// Fold count for `--method cv`.
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        /// Emulator JSON; the validation report goes next to it as `<stem>.report.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict with a fitted emulator at the points of a CSV.
    Predict {
        #[arg(long)]
        emulator: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the modular calibration workflow described by a config file.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write plot-ready tables for a finished calibration run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        /// Points on each emulator curve.
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Design {
            method,
            n,
            space,
            seed,
            restarts,
            skip,
            out,
        } => design(*method, *n, space, *seed, *restarts, *skip, out),
        Command::Fit {
            training,
            output,
            kernel,
            trend,
            method,
            folds,
            seed,
            restarts,
            out,
        } => fit(
            &fit::FitArgs {
                training: training.clone(),
                output: output.clone(),
                kernel: (*kernel).into(),
                trend: (*trend).into(),
                method: *method,
                folds: *folds,
                seed: *seed,
                restarts: *restarts,
            },
            out,
        ),
        Command::Predict { emulator, points, out } => predict(emulator, points, out),
        Command::Calibrate { config, out } => calibrate(config, out).map(|_| ()),
        Command::Report { run, bins, grid } => report(run, *bins, *grid),
    }
}
