//! Modular Bayesian inverse UQ: a discrepancy emulator trained on
//! validation-domain residuals, a code emulator over `(x, θ)`, a posterior
//! with covariance `Σ_exp + Σ_bias + Σ_code(θ)`, adaptive Metropolis sampling
//! and posterior validation that never evaluates the discrepancy at the
//! validation sites.

mod code;
pub mod demo;
mod discrepancy;
mod experiment;
mod mcmc;
mod posterior;
mod prior;
mod simulator;
mod validation;
mod workflow;

use serde::{Deserialize, Serialize};

use crate::emulator::{fit_cv, fit_mle, FitOptions, FittedEmulator, TrainingSet, TrendSpec};
use crate::error::Result;
use crate::kernel::KernelKind;

pub use code::{build_code_emulator, CodeDesign, CodeEmulator, CodeSettings};
pub use discrepancy::{build_discrepancy_emulator, DiscrepancyModel};
pub use experiment::{split_experiments, Domain, ExperimentData, Split};
pub use mcmc::{mcmc_sample, ComponentSummary, McmcSettings, PosteriorChain, PosteriorSummary};
pub use posterior::{log_posterior, CodeModel, PosteriorDensity, StackedPrediction};
pub use prior::{Marginal, PriorSpec};
pub use simulator::{
    BuiltinModel, BuiltinSimulator, SimInput, Simulator, SubprocessSimulator, TableSimulator, WORKERS_ENV,
};
pub use validation::{validate_posterior, ForwardModel};
pub use workflow::{run_workflow, CodeSource, StageTiming, WorkflowResult, WorkflowSettings};

/// Estimation method for emulator hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Estimator {
    Mle,
    Cv { folds: usize },
}

/// Kernel, trend and estimation choices for one emulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmulatorSettings {
    pub kernel: KernelKind,
    pub trend: TrendSpec,
    pub estimator: Estimator,
    pub fit: FitOptions,
}

impl Default for EmulatorSettings {
    fn default() -> Self {
        EmulatorSettings {
            kernel: KernelKind::Gaussian,
            trend: TrendSpec::Constant,
            estimator: Estimator::Mle,
            fit: FitOptions::default(),
        }
    }
}

impl EmulatorSettings {
    pub fn fit(&self, training: &TrainingSet) -> Result<FittedEmulator> {
        match self.estimator {
            Estimator::Mle => fit_mle(training, &self.trend, self.kernel, &self.fit),
            Estimator::Cv { folds } => fit_cv(training, &self.trend, self.kernel, folds, &self.fit),
        }
    }
}
