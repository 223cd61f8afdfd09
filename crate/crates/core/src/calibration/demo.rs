//! Synthetic data for the builtin linear model `y = θ₁x + θ₂` on `[0, 2π]`.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Domain, ExperimentData, Marginal, PriorSpec};
use crate::error::{Error, Result};

/// Parameter values used to generate the synthetic measurements.
pub const TRUTH: [f64; 2] = [2.0, 1.0];

/// `θ₁ ~ U(1, 3)`, `θ₂ ~ U(0, 2)`; the nominal value is the prior mean.
pub fn linear_prior() -> PriorSpec {
    PriorSpec::new(
        vec!["theta1".into(), "theta2".into()],
        vec![
            Marginal::Uniform { lower: 1.0, upper: 3.0 },
            Marginal::Uniform { lower: 0.0, upper: 2.0 },
        ],
        None,
    )
    .expect("valid demo prior")
}

/// Measurements of `2x + 1 + bias·sin x` with Gaussian noise `sigma`, at
/// `n_iuq` calibration sites `2π(k + 1/4)/n_iuq` and `n_val` validation sites
/// `2π(k + 3/4)/n_val`, tagged with their domain. Validation noise comes
/// from its own stream, so the validation rows do not depend on `n_iuq`.
pub fn linear_demo_data(n_iuq: usize, n_val: usize, sigma: f64, bias: f64, seed: u64) -> Result<ExperimentData> {
    if n_iuq == 0 || n_val == 0 {
        return Err(Error::invalid("demo data needs calibration and validation rows"));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("noise level: {e}")))?;
    let mut iuq_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(seed);
    val_rng.set_stream(1);
    let sites = (0..n_iuq)
        .map(|k| (TAU * (k as f64 + 0.25) / n_iuq as f64, Domain::Iuq))
        .chain((0..n_val).map(|k| (TAU * (k as f64 + 0.75) / n_val as f64, Domain::Val)));
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut domains = Vec::new();
    for (site, domain) in sites {
        let reality = TRUTH[0] * site + TRUTH[1] + bias * site.sin();
        x.push(vec![site]);
        let rng = match domain {
            Domain::Iuq => &mut iuq_rng,
            Domain::Val => &mut val_rng,
        };
        y.push(vec![reality + noise.sample(rng)]);
        domains.push(domain);
    }
    let n = x.len();
    ExperimentData::new(vec!["x".into()], vec!["y".into()], x, y, vec![vec![sigma * sigma]; n])?.with_domains(domains)
}
