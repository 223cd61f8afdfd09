use super::{CodeEmulator, ExperimentData, PosteriorChain, Simulator};
use crate::diagnostics::{ReportKind, Residual, ValidationReport};
use crate::error::{check_dim, Error, Result};

/// Model pushed through the posterior at the validation sites. The
/// discrepancy emulator is deliberately not an option.
#[derive(Debug, Clone, Copy)]
pub enum ForwardModel<'a> {
    Simulator(&'a dyn Simulator),
    /// GPcode mean, with its MSE added to the predictive variance.
    CodeEmulator(&'a CodeEmulator),
}

impl ForwardModel<'_> {
    fn n_qoi(&self) -> usize {
        match self {
            ForwardModel::Simulator(s) => s.qoi_names().len(),
            ForwardModel::CodeEmulator(c) => c.emulators().len(),
        }
    }
}

/// Evenly spaced draws covering the whole chain.
fn subsample(chain: &PosteriorChain, n_sub: usize) -> Vec<&[f64]> {
    let len = chain.len();
    let n = n_sub.min(len).max(1);
    (0..n).map(|k| chain.samples()[k * len / n].as_slice()).collect()
}

/// Posterior predictive check of `y^M(x^VAL, θ^Posterior)` against the
/// validation measurements.
///
/// For each site and QoI the predicted value is the mean over `n_sub`
/// posterior draws; the predictive variance is the spread over the draws plus
/// the measurement variance (plus the mean emulator MSE for GPcode).
pub fn validate_posterior(
    model: ForwardModel<'_>,
    chain: &PosteriorChain,
    val: &ExperimentData,
    n_sub: usize,
) -> Result<ValidationReport> {
    if chain.is_empty() {
        return Err(Error::Diagnostics("posterior chain has no retained draws".into()));
    }
    if n_sub == 0 {
        return Err(Error::invalid("posterior subsample size must be positive"));
    }
    check_dim(model.n_qoi(), val.n_qoi())?;
    let draws = subsample(chain, n_sub);
    let n = val.n_rows();
    let q = val.n_qoi();
    // values[s][k] over stacked index k = qoi·n + row
    let mut values = vec![vec![0.0; n * q]; draws.len()];
    let mut code_mse = vec![0.0; n * q];
    match model {
        ForwardModel::Simulator(sim) => {
            let inputs: Vec<_> = draws
                .iter()
                .flat_map(|t| val.x().iter().map(move |x| (x.clone(), t.to_vec())))
                .collect();
            let out = sim.evaluate_batch(&inputs)?;
            for (s, v) in values.iter_mut().enumerate() {
                for i in 0..n {
                    for qq in 0..q {
                        v[qq * n + i] = out[s * n + i][qq];
                    }
                }
            }
        }
        ForwardModel::CodeEmulator(code) => {
            for (s, theta) in draws.iter().enumerate() {
                let p = code.predict(val.x(), theta, false)?;
                for k in 0..n * q {
                    values[s][k] = p.mean[k];
                    code_mse[k] += p.covariance[(k, k)] / draws.len() as f64;
                }
            }
        }
    }
    let m = draws.len() as f64;
    let actual = val.stacked();
    let noise = val.noise_covariance();
    let residuals = (0..n * q)
        .map(|k| {
            let mean = values.iter().map(|v| v[k]).sum::<f64>() / m;
            let spread = values.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / m;
            Residual {
                predicted: mean,
                mse: spread + noise[(k, k)] + code_mse[k],
                actual: actual[k],
            }
        })
        .collect();
    ValidationReport::from_residuals(ReportKind::Posterior, residuals)
}
