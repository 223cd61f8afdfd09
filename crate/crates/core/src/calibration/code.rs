use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::posterior::StackedPrediction;
use super::{EmulatorSettings, PriorSpec, Simulator};
use crate::design::{maximin_lhs, ParameterSpace};
use crate::diagnostics::{q2_loocv, LoocvMode};
use crate::emulator::{FittedEmulator, TrainingSet, TrendSpec};
use crate::error::{check_dim, Error, Result};
use crate::kernel::KernelKind;

const MAXIMIN_RESTARTS: usize = 20;

/// Largest number of distinct design sites for which `Auto` uses a cross design.
const CROSS_MAX_SITES: usize = 3;

/// Layout of the simulator runs used to train the code emulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeDesign {
    /// `Cross` for at most three distinct design sites, `Joint` otherwise.
    #[default]
    Auto,
    /// Every distinct calibration site crossed with a maximin set of `θ` values.
    Cross,
    /// Maximin `θ` values, each paired with one calibration site in turn.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeSettings {
    pub n_train: usize,
    pub design: CodeDesign,
    pub seed: u64,
    pub emulator: EmulatorSettings,
}

impl Default for CodeSettings {
    fn default() -> Self {
        CodeSettings {
            n_train: 40,
            design: CodeDesign::Auto,
            seed: 0,
            emulator: EmulatorSettings {
                kernel: KernelKind::Matern52,
                trend: TrendSpec::Linear,
                ..EmulatorSettings::default()
            },
        }
    }
}

/// Emulator of the computer model over `(x, θ)` ("GPcode"), one GP per QoI.
#[derive(Debug, Clone)]
pub struct CodeEmulator {
    emulators: Vec<FittedEmulator>,
    x_dim: usize,
    theta_dim: usize,
    q2: Vec<f64>,
}

fn distinct_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        if !out.contains(r) {
            out.push(r.clone());
        }
    }
    out
}

fn theta_design(n: usize, prior: &PriorSpec, seed: u64) -> Result<Vec<Vec<f64>>> {
    let unit = maximin_lhs(n, &ParameterSpace::unit(prior.dim()), MAXIMIN_RESTARTS, seed)?;
    Ok(unit.unit_points().iter().map(|u| prior.from_unit(u)).collect())
}

/// Runs the simulator on a design over the calibration sites `x_iuq` and the
/// prior, then fits one emulator per QoI.
pub fn build_code_emulator(
    sim: &dyn Simulator,
    x_iuq: &[Vec<f64>],
    prior: &PriorSpec,
    settings: &CodeSettings,
) -> Result<CodeEmulator> {
    let x_dim = sim.x_names().len();
    let theta_dim = prior.dim();
    check_dim(sim.theta_names().len(), theta_dim)?;
    for x in x_iuq {
        check_dim(x_dim, x.len())?;
    }
    let sites = distinct_rows(x_iuq);
    if sites.is_empty() {
        return Err(Error::invalid("the code emulator needs at least one calibration site"));
    }
    if settings.n_train < x_dim + theta_dim + 2 {
        return Err(Error::invalid(format!(
            "the code emulator needs at least {} training runs, got {}",
            x_dim + theta_dim + 2,
            settings.n_train
        )));
    }
    let design = match settings.design {
        CodeDesign::Auto if sites.len() <= CROSS_MAX_SITES => CodeDesign::Cross,
        CodeDesign::Auto => CodeDesign::Joint,
        d => d,
    };
    let inputs: Vec<(Vec<f64>, Vec<f64>)> = match design {
        CodeDesign::Cross => {
            let n_theta = (settings.n_train / sites.len()).max(2);
            let thetas = theta_design(n_theta, prior, settings.seed)?;
            thetas
                .iter()
                .flat_map(|t| sites.iter().map(move |x| (x.clone(), t.clone())))
                .collect()
        }
        _ => {
            let thetas = theta_design(settings.n_train, prior, settings.seed)?;
            let mut order: Vec<usize> = (0..sites.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(settings.seed));
            thetas
                .into_iter()
                .enumerate()
                .map(|(k, t)| (sites[order[k % sites.len()]].clone(), t))
                .collect()
        }
    };
    log::info!("code emulator: {} simulator runs ({design:?} design)", inputs.len());
    let outputs = sim.evaluate_batch(&inputs)?;
    let names: Vec<String> = sim.x_names().iter().chain(prior.names()).cloned().collect();
    let joined: Vec<Vec<f64>> = inputs.iter().map(|(x, t)| [x.as_slice(), t].concat()).collect();
    let mut emulators = Vec::new();
    let mut q2 = Vec::new();
    for (q, qoi) in sim.qoi_names().iter().enumerate() {
        let y: Vec<f64> = outputs.iter().map(|r| r[q]).collect();
        let training = TrainingSet::new(joined.clone(), y)?.with_names(names.clone(), qoi.clone())?;
        let em = settings.emulator.fit(&training)?;
        q2.push(q2_loocv(&em, &LoocvMode::Fixed)?);
        emulators.push(em);
    }
    Ok(CodeEmulator {
        emulators,
        x_dim,
        theta_dim,
        q2,
    })
}

impl CodeEmulator {
    pub fn emulators(&self) -> &[FittedEmulator] {
        &self.emulators
    }

    /// Leave-one-out Q2 of each QoI emulator.
    pub fn q2(&self) -> &[f64] {
        &self.q2
    }

    pub fn min_q2(&self) -> f64 {
        self.q2.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    /// Emulated `y^M(x_i, θ)` for every row, stacked QoI-major. Without
    /// `with_covariance` only the diagonal of the covariance is filled.
    pub fn predict(&self, x: &[Vec<f64>], theta: &[f64], with_covariance: bool) -> Result<StackedPrediction> {
        check_dim(self.theta_dim, theta.len())?;
        let points: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                check_dim(self.x_dim, r.len())?;
                Ok([r.as_slice(), theta].concat())
            })
            .collect::<Result<_>>()?;
        let n = x.len();
        let q = self.emulators.len();
        let mut mean = DVector::zeros(n * q);
        let mut cov = DMatrix::zeros(n * q, n * q);
        for (k, em) in self.emulators.iter().enumerate() {
            let b = em.predict_batch(&points, with_covariance)?;
            mean.rows_mut(k * n, n).copy_from_slice(&b.means);
            match &b.covariance {
                Some(c) => cov.view_mut((k * n, k * n), (n, n)).copy_from(c),
                None => {
                    for (i, v) in b.mse.iter().enumerate() {
                        cov[(k * n + i, k * n + i)] = *v;
                    }
                }
            }
        }
        Ok(StackedPrediction { mean, covariance: cov })
    }
}
