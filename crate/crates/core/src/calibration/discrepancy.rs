use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use super::posterior::StackedPrediction;
use super::{EmulatorSettings, ExperimentData, Simulator};
use crate::emulator::{FittedEmulator, TrainingSet};
use crate::error::{check_dim, Error, Result};

/// Emulator of the model discrepancy `δ(x)` ("GPbias"), one GP per QoI,
/// trained on `y^E(x^VAL) − y^M(x^VAL, θ⁰)` with the measurement variances as
/// per-site nuggets.
#[derive(Debug)]
pub struct DiscrepancyModel {
    emulators: Vec<FittedEmulator>,
    residuals: Vec<Vec<f64>>,
    evaluations: AtomicUsize,
}

impl Clone for DiscrepancyModel {
    fn clone(&self) -> Self {
        DiscrepancyModel {
            emulators: self.emulators.clone(),
            residuals: self.residuals.clone(),
            evaluations: AtomicUsize::new(self.evaluations()),
        }
    }
}

/// Fits the discrepancy emulator over the design variables only.
pub fn build_discrepancy_emulator(
    sim: &dyn Simulator,
    val: &ExperimentData,
    theta0: &[f64],
    settings: &EmulatorSettings,
) -> Result<DiscrepancyModel> {
    if val.n_rows() < 2 {
        return Err(Error::invalid(format!(
            "the discrepancy emulator needs at least 2 validation rows, got {}",
            val.n_rows()
        )));
    }
    check_dim(sim.x_names().len(), val.x_dim())?;
    check_dim(sim.qoi_names().len(), val.n_qoi())?;
    let inputs: Vec<_> = val.x().iter().map(|x| (x.clone(), theta0.to_vec())).collect();
    let model = sim.evaluate_batch(&inputs)?;
    let mut emulators = Vec::with_capacity(val.n_qoi());
    let mut residuals = Vec::with_capacity(val.n_qoi());
    for q in 0..val.n_qoi() {
        let r: Vec<f64> = val.y().iter().zip(&model).map(|(obs, m)| obs[q] - m[q]).collect();
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite discrepancy residual"));
        }
        let training = TrainingSet::new(val.x().to_vec(), r.clone())?
            .with_names(val.x_names().to_vec(), format!("delta_{}", val.qoi_names()[q]))?
            .with_noise_variance(val.noise_variance(q))?;
        emulators.push(settings.fit(&training)?);
        residuals.push(r);
    }
    Ok(DiscrepancyModel {
        emulators,
        residuals,
        evaluations: AtomicUsize::new(0),
    })
}

impl DiscrepancyModel {
    pub fn emulators(&self) -> &[FittedEmulator] {
        &self.emulators
    }

    /// Training residuals per QoI.
    pub fn residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }

    /// Per-site nuggets of QoI `q` in correlation units: `Σ_exp,ii / s_y²`.
    pub fn nuggets(&self, q: usize) -> Vec<f64> {
        self.emulators[q].training().site_noise()
    }

    /// Number of prediction requests served so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// `δ` mean and posterior covariance at `x`, stacked QoI-major with a
    /// block-diagonal covariance.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<StackedPrediction> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let n = x.len();
        let q = self.emulators.len();
        let mut mean = DVector::zeros(n * q);
        let mut cov = DMatrix::zeros(n * q, n * q);
        for (k, em) in self.emulators.iter().enumerate() {
            let b = em.predict_batch(x, true)?;
            mean.rows_mut(k * n, n).copy_from_slice(&b.means);
            cov.view_mut((k * n, k * n), (n, n))
                .copy_from(b.covariance.as_ref().expect("requested covariance"));
        }
        Ok(StackedPrediction { mean, covariance: cov })
    }
}
