use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{CodeEmulator, DiscrepancyModel, ExperimentData, PriorSpec, Simulator};
use crate::error::{check_dim, Error, Result};
use crate::linalg::factor_with_jitter;

/// Jitter bounds for `Σ`, relative to its mean diagonal.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Mean and covariance over observations stacked QoI-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedPrediction {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Source of `y^M(x, θ)` inside the likelihood.
#[derive(Debug, Clone)]
pub enum CodeModel {
    /// GPcode mean with its posterior covariance as `Σ_code(θ)`.
    Emulator(CodeEmulator),
    /// The simulator itself, with `Σ_code = 0`.
    Exact(Arc<dyn Simulator>),
}

impl CodeModel {
    pub fn predict(&self, x: &[Vec<f64>], theta: &[f64]) -> Result<StackedPrediction> {
        match self {
            CodeModel::Emulator(em) => em.predict(x, theta, true),
            CodeModel::Exact(sim) => {
                let inputs: Vec<_> = x.iter().map(|r| (r.clone(), theta.to_vec())).collect();
                let out = sim.evaluate_batch(&inputs)?;
                let n = x.len();
                let q = sim.qoi_names().len();
                let mean = DVector::from_fn(n * q, |k, _| out[k % n][k / n]);
                Ok(StackedPrediction {
                    mean,
                    covariance: DMatrix::zeros(n * q, n * q),
                })
            }
        }
    }
}

/// Posterior of `θ` given calibration data, with the discrepancy contribution
/// evaluated once at the calibration sites.
#[derive(Debug, Clone)]
pub struct PosteriorDensity {
    code: CodeModel,
    prior: PriorSpec,
    x: Vec<Vec<f64>>,
    /// `y^E − μ_δ`, stacked.
    target: DVector<f64>,
    /// `Σ_exp + Σ_bias`
    base: DMatrix<f64>,
}

impl PosteriorDensity {
    /// Without a discrepancy model `δ ≡ 0` and `Σ_bias = 0`.
    pub fn new(
        code: CodeModel,
        discrepancy: Option<&DiscrepancyModel>,
        iuq: &ExperimentData,
        prior: PriorSpec,
    ) -> Result<Self> {
        let y = DVector::from_vec(iuq.stacked());
        let mut target = y;
        let mut base = iuq.noise_covariance().clone();
        if let Some(d) = discrepancy {
            check_dim(iuq.n_qoi(), d.emulators().len())?;
            let bias = d.predict(iuq.x())?;
            target -= &bias.mean;
            base += &bias.covariance;
        }
        Ok(PosteriorDensity {
            code,
            prior,
            x: iuq.x().to_vec(),
            target,
            base,
        })
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn code(&self) -> &CodeModel {
        &self.code
    }

    /// `−½ ln|Σ| − ½ dᵀΣ⁻¹d` with `d = y^E − μ_code(θ) − μ_δ`.
    pub fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.prior.dim(), theta.len())?;
        let code = self.code.predict(&self.x, theta)?;
        let d = &self.target - &code.mean;
        let sigma = &self.base + &code.covariance;
        let scale = sigma.diagonal().mean().max(f64::MIN_POSITIVE);
        let (factor, jitter) = factor_with_jitter(&sigma, JITTER_START * scale, JITTER_MAX * scale)
            .ok_or_else(|| Error::NumericalBreakdown("likelihood covariance is not positive definite".into()))?;
        if jitter > 0.0 {
            log::debug!("likelihood covariance needed jitter {jitter:e}");
        }
        let w = factor.solve_lower(&d);
        Ok(-0.5 * factor.log_det() - 0.5 * w.norm_squared())
    }

    /// Log prior plus log likelihood; `−∞` outside the prior support.
    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        if !self.prior.contains(theta) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.prior.ln_density(theta) + self.log_likelihood(theta)?)
    }
}

/// Unnormalized log posterior of `θ`.
pub fn log_posterior(
    theta: &[f64],
    code: &CodeModel,
    discrepancy: Option<&DiscrepancyModel>,
    iuq: &ExperimentData,
    prior: &PriorSpec,
) -> Result<f64> {
    if !prior.contains(theta) {
        return Ok(f64::NEG_INFINITY);
    }
    PosteriorDensity::new(code.clone(), discrepancy, iuq, prior.clone())?.log_posterior(theta)
}
