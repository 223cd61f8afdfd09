//! Emulator accuracy metrics: leave-one-out error, predictivity coefficient
//! Q2 and interval coverage.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::emulator::{fit_mle, FitOptions, FittedEmulator, HeldOut, Z95};
use crate::error::{check_dim, Error, Result};

/// Conventional threshold above which Q2 is considered satisfactory.
pub const Q2_SATISFACTORY: f64 = 0.7;

/// Absolute slack (relative to `1 + |y|`) allowed when checking whether an
/// observation lies inside a zero-width interval.
const COVERAGE_SLACK: f64 = 1e-10;

/// Hyperparameter handling for leave-one-out predictions.
#[derive(Debug, Clone, PartialEq)]
pub enum LoocvMode {
    /// Keep the fitted correlation parameters and `σ̂²`; only the
    /// conditioning set changes.
    Fixed,
    /// Refit the emulator by maximum likelihood on every reduced set.
    Reestimate(FitOptions),
}

/// Leave-one-out predictions of every training run.
pub fn loocv_predictions(emulator: &FittedEmulator, mode: &LoocvMode) -> Result<Vec<HeldOut>> {
    let training = emulator.training();
    let m = training.len();
    if m < 2 {
        return Err(Error::Diagnostics(format!(
            "leave-one-out needs at least 2 runs, got {m}"
        )));
    }
    match mode {
        LoocvMode::Fixed => emulator.leave_one_out(),
        LoocvMode::Reestimate(opts) => (0..m)
            .map(|i| {
                let rest: Vec<usize> = (0..m).filter(|j| *j != i).collect();
                let sub = training.subset(&rest)?;
                let fit = fit_mle(&sub, emulator.trend(), emulator.kernel().kind, opts)?;
                let p = fit.predict(&training.inputs()[i])?;
                Ok(HeldOut {
                    index: i,
                    observed: training.outputs()[i],
                    mean: p.mean,
                    mse: p.mse,
                })
            })
            .collect(),
    }
}

/// `ε_LOOCV = (1/m) Σ (y_i − μ_(−i)(x_i))²`
pub fn loocv_error(emulator: &FittedEmulator, mode: &LoocvMode) -> Result<f64> {
    let held = loocv_predictions(emulator, mode)?;
    Ok(held.iter().map(|h| (h.observed - h.mean).powi(2)).sum::<f64>() / held.len() as f64)
}

/// `Q2 = 1 − Σ(y − ŷ)² / Σ(y − ȳ)²` with `ȳ` the mean of `observed`.
pub fn q2(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_dim(observed.len(), predicted.len())?;
    if observed.len() < 2 {
        return Err(Error::Diagnostics("Q2 needs at least 2 points".into()));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let total: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    if total == 0.0 {
        return Err(Error::Diagnostics("Q2 is undefined for constant outputs".into()));
    }
    let resid: f64 = observed.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - resid / total)
}

/// Q2 on an independent test sample. Test points that coincide with
/// training runs trigger a warning: accuracy measured there is optimistic.
pub fn q2_test(emulator: &FittedEmulator, test_x: &[Vec<f64>], test_y: &[f64]) -> Result<f64> {
    check_dim(test_x.len(), test_y.len())?;
    warn_on_overlap(emulator, test_x);
    let pred = emulator.predict_batch(test_x, false)?;
    q2(test_y, &pred.means)
}

/// Q2 with leave-one-out predictions in place of a test sample.
pub fn q2_loocv(emulator: &FittedEmulator, mode: &LoocvMode) -> Result<f64> {
    let held = loocv_predictions(emulator, mode)?;
    let obs: Vec<f64> = held.iter().map(|h| h.observed).collect();
    let pred: Vec<f64> = held.iter().map(|h| h.mean).collect();
    q2(&obs, &pred)
}

/// Two-sided normal quantile for a central interval; 0.95 maps to 1.96.
pub fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "coverage level must lie in (0, 1), got {level}"
        )));
    }
    if (level - 0.95).abs() < 1e-12 {
        return Ok(Z95);
    }
    Ok(Normal::standard().inverse_cdf(0.5 + 0.5 * level))
}

fn covered(actual: f64, predicted: f64, mse: f64, z: f64) -> bool {
    (actual - predicted).abs() <= z * mse.max(0.0).sqrt() + COVERAGE_SLACK * (1.0 + actual.abs())
}

/// Fraction of test outputs inside the emulator's central interval at `level`.
pub fn coverage_report(emulator: &FittedEmulator, test_x: &[Vec<f64>], test_y: &[f64], level: f64) -> Result<f64> {
    check_dim(test_x.len(), test_y.len())?;
    if test_y.is_empty() {
        return Err(Error::Diagnostics("coverage needs at least one test point".into()));
    }
    let z = z_value(level)?;
    let pred = emulator.predict_batch(test_x, false)?;
    let hits = (0..test_y.len())
        .filter(|i| covered(test_y[*i], pred.means[*i], pred.mse[*i], z))
        .count();
    Ok(hits as f64 / test_y.len() as f64)
}

fn warn_on_overlap(emulator: &FittedEmulator, test_x: &[Vec<f64>]) {
    let scaling = emulator.training().input_scaling();
    let train = emulator.training().scaled_inputs();
    let overlap = test_x
        .iter()
        .filter(|x| {
            let u = scaling.scale(x);
            train
                .iter()
                .any(|t| t.iter().zip(&u).all(|(a, b)| (a - b).abs() <= 1e-12))
        })
        .count();
    if overlap > 0 {
        log::warn!(
            "{overlap} test point(s) coincide with training runs; accuracy measured close to training samples is misleadingly high"
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Loocv,
    TestSample,
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub predicted: f64,
    /// Predictive variance used for the interval.
    pub mse: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kind: ReportKind,
    /// Mean squared prediction error; the LOOCV error for leave-one-out reports.
    pub mean_squared_error: f64,
    /// Absent when the actual values have no spread.
    pub q2: Option<f64>,
    pub n_points: usize,
    pub coverage_95: f64,
    pub residuals: Vec<Residual>,
}

impl ValidationReport {
    pub fn from_residuals(kind: ReportKind, residuals: Vec<Residual>) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::Diagnostics("validation report needs at least one point".into()));
        }
        let n = residuals.len();
        let mse = residuals.iter().map(|r| (r.actual - r.predicted).powi(2)).sum::<f64>() / n as f64;
        let actual: Vec<f64> = residuals.iter().map(|r| r.actual).collect();
        let predicted: Vec<f64> = residuals.iter().map(|r| r.predicted).collect();
        let q2 = q2(&actual, &predicted).ok();
        let hits = residuals
            .iter()
            .filter(|r| covered(r.actual, r.predicted, r.mse, Z95))
            .count();
        Ok(ValidationReport {
            kind,
            mean_squared_error: mse,
            q2,
            n_points: n,
            coverage_95: hits as f64 / n as f64,
            residuals,
        })
    }

    pub fn loocv(emulator: &FittedEmulator, mode: &LoocvMode) -> Result<Self> {
        let held = loocv_predictions(emulator, mode)?;
        Self::from_residuals(
            ReportKind::Loocv,
            held.iter()
                .map(|h| Residual {
                    predicted: h.mean,
                    mse: h.mse,
                    actual: h.observed,
                })
                .collect(),
        )
    }

    pub fn test_sample(emulator: &FittedEmulator, test_x: &[Vec<f64>], test_y: &[f64]) -> Result<Self> {
        check_dim(test_x.len(), test_y.len())?;
        warn_on_overlap(emulator, test_x);
        let pred = emulator.predict_batch(test_x, false)?;
        Self::from_residuals(
            ReportKind::TestSample,
            (0..test_y.len())
                .map(|i| Residual {
                    predicted: pred.means[i],
                    mse: pred.mse[i],
                    actual: test_y[i],
                })
                .collect(),
        )
    }

    pub fn rmse(&self) -> f64 {
        self.mean_squared_error.sqrt()
    }

    pub fn is_satisfactory(&self) -> bool {
        self.q2.is_some_and(|q| q > Q2_SATISFACTORY)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat residual table: `predicted,mse,actual`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["predicted", "mse", "actual"])?;
        for r in &self.residuals {
            w.write_record([
                format!("{:.16e}", r.predicted),
                format!("{:.16e}", r.mse),
                format!("{:.16e}", r.actual),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
