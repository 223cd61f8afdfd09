use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    build_code_emulator, build_discrepancy_emulator, mcmc_sample, split_experiments, validate_posterior, CodeEmulator,
    CodeModel, CodeSettings, DiscrepancyModel, EmulatorSettings, ExperimentData, ForwardModel, McmcSettings,
    PosteriorChain, PosteriorDensity, PriorSpec, Simulator, Split,
};
use crate::diagnostics::{ValidationReport, Q2_SATISFACTORY};
use crate::error::{Error, Result, Stage};

/// Where `y^M` comes from inside the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeSource {
    /// Train GPcode and gate on its LOOCV Q2.
    #[default]
    Emulator,
    /// Call the simulator directly (cheap models only); no code uncertainty.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowSettings {
    pub split: Split,
    /// When false `δ ≡ 0`: the over-fitting-prone classical calibration.
    pub use_discrepancy: bool,
    pub discrepancy: EmulatorSettings,
    pub code_source: CodeSource,
    pub code: CodeSettings,
    /// Minimum GPcode LOOCV Q2 required before sampling.
    pub q2_gate: f64,
    pub mcmc: McmcSettings,
    /// Posterior draws pushed through the model at the validation sites.
    pub validation_draws: usize,
}

impl Default for WorkflowSettings {
    fn default() -> Self {
        WorkflowSettings {
            split: Split::Tagged,
            use_discrepancy: true,
            discrepancy: EmulatorSettings::default(),
            code_source: CodeSource::Emulator,
            code: CodeSettings::default(),
            q2_gate: Q2_SATISFACTORY,
            mcmc: McmcSettings::default(),
            validation_draws: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct WorkflowResult {
    pub iuq: ExperimentData,
    pub val: ExperimentData,
    pub discrepancy: Option<DiscrepancyModel>,
    pub code: Option<CodeEmulator>,
    pub chain: PosteriorChain,
    pub validation: ValidationReport,
    /// Discrepancy-emulator requests made while validating; always 0.
    pub discrepancy_calls_in_validation: usize,
    pub timings: Vec<StageTiming>,
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.at(stage));
    let seconds = start.elapsed().as_secs_f64();
    log::info!("{stage}: {seconds:.3} s");
    timings.push(StageTiming { stage, seconds });
    out
}

/// Split, GPbias, GPcode, gated MCMC, then posterior validation without the
/// discrepancy term.
pub fn run_workflow(
    sim: Arc<dyn Simulator>,
    data: &ExperimentData,
    prior: &PriorSpec,
    settings: &WorkflowSettings,
) -> Result<WorkflowResult> {
    let mut timings = Vec::new();
    let (iuq, val) = timed(&mut timings, Stage::Split, || split_experiments(data, &settings.split))?;
    let theta0 = prior.nominal().to_vec();

    let discrepancy = if settings.use_discrepancy {
        Some(timed(&mut timings, Stage::Discrepancy, || {
            build_discrepancy_emulator(sim.as_ref(), &val, &theta0, &settings.discrepancy)
        })?)
    } else {
        None
    };

    let code = match settings.code_source {
        CodeSource::Exact => None,
        CodeSource::Emulator => Some(timed(&mut timings, Stage::CodeEmulator, || {
            let code = build_code_emulator(sim.as_ref(), iuq.x(), prior, &settings.code)?;
            log::info!("code emulator LOOCV Q2 per QoI: {:?}", code.q2());
            if code.min_q2() < settings.q2_gate {
                return Err(Error::Gate(format!(
                    "code emulator LOOCV Q2 {:.4} is below the threshold {}",
                    code.min_q2(),
                    settings.q2_gate
                )));
            }
            Ok(code)
        })?),
    };

    let chain = timed(&mut timings, Stage::Sampling, || {
        let model = match &code {
            Some(c) => CodeModel::Emulator(c.clone()),
            None => CodeModel::Exact(sim.clone()),
        };
        let density = PosteriorDensity::new(model, discrepancy.as_ref(), &iuq, prior.clone())?;
        mcmc_sample(|t| density.log_posterior(t), prior, &settings.mcmc)
    })?;

    let calls_before = discrepancy.as_ref().map_or(0, DiscrepancyModel::evaluations);
    let validation = timed(&mut timings, Stage::Validation, || {
        let needed = settings.validation_draws.min(chain.len()) * val.n_rows();
        let model = match (&code, sim.evaluation_budget()) {
            (Some(c), Some(budget)) if needed > budget => {
                log::info!("validation via the code emulator: {needed} runs exceed the budget of {budget}");
                ForwardModel::CodeEmulator(c)
            }
            _ => ForwardModel::Simulator(sim.as_ref()),
        };
        validate_posterior(model, &chain, &val, settings.validation_draws)
    })?;
    let discrepancy_calls_in_validation = discrepancy.as_ref().map_or(0, DiscrepancyModel::evaluations) - calls_before;

    Ok(WorkflowResult {
        iuq,
        val,
        discrepancy,
        code,
        chain,
        validation,
        discrepancy_calls_in_validation,
        timings,
    })
}
