use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use super::PriorSpec;
use crate::error::{Error, Result};
use crate::linalg::Factor;

/// Acceptance below this after adaptation is reported as a failed chain.
const MIN_ACCEPTANCE: f64 = 0.01;

/// Optimal random-walk scaling for Gaussian targets.
const HAARIO_SCALE: f64 = 2.38 * 2.38;

/// Fewest burn-in draws needed before switching to the empirical covariance.
const MIN_EMPIRICAL_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    /// Retained draws per chain.
    pub n_samples: usize,
    /// Burn-in iterations per chain; 20% of `n_samples` when absent.
    pub n_burn: Option<usize>,
    pub thin: usize,
    pub n_chains: usize,
    /// Chain `k` uses `seed + k`.
    pub seed: u64,
    /// Burn-in iterations between proposal-scale updates.
    pub adapt_interval: usize,
    pub target_acceptance: f64,
    /// Switch to the empirical burn-in covariance halfway through burn-in.
    pub empirical_covariance: bool,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            n_samples: 10_000,
            n_burn: None,
            thin: 1,
            n_chains: 1,
            seed: 0,
            adapt_interval: 50,
            target_acceptance: 0.3,
            empirical_covariance: true,
        }
    }
}

impl McmcSettings {
    pub fn burn_in(&self) -> usize {
        self.n_burn.unwrap_or(self.n_samples / 5)
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.thin == 0 || self.n_chains == 0 || self.adapt_interval == 0 {
            return Err(Error::invalid(
                "n_samples, thin, n_chains and adapt_interval must be positive",
            ));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::invalid("target acceptance must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Retained MCMC draws of `θ` in physical units, chains concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    names: Vec<String>,
    samples: Vec<Vec<f64>>,
    log_post: Vec<f64>,
    chain: Vec<usize>,
    iteration: Vec<usize>,
    acceptance: Vec<f64>,
    burn_in: usize,
    thin: usize,
    seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub q025: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_samples: usize,
    pub n_chains: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seeds: Vec<u64>,
    /// Post-burn-in acceptance rate of each chain.
    pub acceptance: Vec<f64>,
    pub acceptance_rate: f64,
    pub components: Vec<ComponentSummary>,
}

impl PosteriorChain {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn log_posterior(&self) -> &[f64] {
        &self.log_post
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn thin(&self) -> usize {
        self.thin
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    /// Post-burn-in acceptance rate per chain.
    pub fn acceptance(&self) -> &[f64] {
        &self.acceptance
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance.iter().sum::<f64>() / self.acceptance.len() as f64
    }

    /// Draws of component `k`.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[k]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim())
            .map(|k| self.samples.iter().map(|s| s[k]).sum::<f64>() / n)
            .collect()
    }

    /// Sample covariance with the `n − 1` divisor.
    pub fn covariance(&self) -> DMatrix<f64> {
        sample_covariance(&self.samples)
    }

    pub fn summary(&self) -> PosteriorSummary {
        let cov = self.covariance();
        let mean = self.mean();
        let components = self
            .names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let mut data = Data::new(self.component(k));
                ComponentSummary {
                    name: name.clone(),
                    mean: mean[k],
                    std: cov[(k, k)].sqrt(),
                    q025: data.quantile(0.025),
                    q05: data.quantile(0.05),
                    q25: data.quantile(0.25),
                    median: data.median(),
                    q75: data.quantile(0.75),
                    q95: data.quantile(0.95),
                    q975: data.quantile(0.975),
                }
            })
            .collect();
        PosteriorSummary {
            n_samples: self.len(),
            n_chains: self.acceptance.len(),
            burn_in: self.burn_in,
            thin: self.thin,
            seeds: self.seeds.clone(),
            acceptance: self.acceptance.clone(),
            acceptance_rate: self.acceptance_rate(),
            components,
        }
    }

    /// Columns `chain,iteration,<θ names>,log_post`, one retained draw per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("log_post".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.chain[i].to_string(), self.iteration[i].to_string()];
            row.extend(self.samples[i].iter().map(|v| format!("{v:.16e}")));
            row.push(format!("{:.16e}", self.log_post[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads draws written by [`PosteriorChain::write_csv`]; run metadata is
    /// taken from `summary`.
    pub fn read_csv<R: Read>(input: R, summary: &PosteriorSummary) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let width = header.len();
        if width < 4 || &header[0] != "chain" || &header[1] != "iteration" || &header[width - 1] != "log_post" {
            return Err(Error::invalid(
                "chain CSV must have columns chain,iteration,<parameters>,log_post",
            ));
        }
        let names: Vec<String> = (2..width - 1).map(|k| header[k].to_string()).collect();
        let mut chain = PosteriorChain {
            names,
            samples: Vec::new(),
            log_post: Vec::new(),
            chain: Vec::new(),
            iteration: Vec::new(),
            acceptance: summary.acceptance.clone(),
            burn_in: summary.burn_in,
            thin: summary.thin,
            seeds: summary.seeds.clone(),
        };
        for (row, record) in r.records().enumerate() {
            let record = record?;
            let bad =
                |col: usize| Error::invalid(format!("chain CSV row {}, column {}: not a number", row + 1, col + 1));
            chain.chain.push(record[0].trim().parse().map_err(|_| bad(0))?);
            chain.iteration.push(record[1].trim().parse().map_err(|_| bad(1))?);
            let values = (2..width)
                .map(|c| record[c].trim().parse::<f64>().map_err(|_| bad(c)))
                .collect::<Result<Vec<f64>>>()?;
            chain.log_post.push(values[width - 3]);
            chain.samples.push(values[..width - 3].to_vec());
        }
        Ok(chain)
    }
}

fn sample_covariance(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let d = samples.first().map_or(0, Vec::len);
    let n = samples.len();
    let mut mean = DVector::zeros(d);
    for s in samples {
        mean += DVector::from_column_slice(s);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = DVector::from_column_slice(s) - &mean;
        cov += &c * c.transpose();
    }
    cov / (n.max(2) - 1) as f64
}

struct Proposal {
    chol: DMatrix<f64>,
    scale: f64,
}

impl Proposal {
    fn draw(&self, current: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let z = DVector::from_fn(current.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &self.chol * z * self.scale.sqrt();
        current.iter().zip(step.iter()).map(|(c, s)| c + s).collect()
    }
}

struct ChainRun {
    samples: Vec<Vec<f64>>,
    log_post: Vec<f64>,
    iteration: Vec<usize>,
    acceptance: f64,
}

fn run_chain<F>(log_post: &mut F, prior: &PriorSpec, settings: &McmcSettings, seed: u64) -> Result<ChainRun>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = prior.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = prior.nominal().to_vec();
    let mut current_lp = log_post(&current)?;
    if !current_lp.is_finite() {
        return Err(Error::invalid(format!(
            "log posterior at the starting point {current:?} is not finite"
        )));
    }
    let std = prior.std_devs();
    let mut proposal = Proposal {
        chol: DMatrix::from_diagonal(&DVector::from_iterator(d, std.iter().map(|s| s / 10.0))),
        scale: 1.0,
    };
    let burn = settings.burn_in();
    let switch_at = burn / 2;
    let use_empirical = settings.empirical_covariance && switch_at - burn / 4 >= MIN_EMPIRICAL_DRAWS;
    let total = burn + settings.n_samples * settings.thin;
    let mut burn_draws = Vec::new();
    let mut window_accepted = 0usize;
    let mut accepted_after = 0usize;
    let mut run = ChainRun {
        samples: Vec::with_capacity(settings.n_samples),
        log_post: Vec::with_capacity(settings.n_samples),
        iteration: Vec::with_capacity(settings.n_samples),
        acceptance: 0.0,
    };
    for it in 0..total {
        let candidate = proposal.draw(&current, &mut rng);
        let u: f64 = rng.random();
        let accepted = if prior.contains(&candidate) {
            let lp = log_post(&candidate)?;
            if lp.is_finite() && u.ln() < lp - current_lp {
                current = candidate;
                current_lp = lp;
                true
            } else {
                false
            }
        } else {
            false
        };
        if it < burn {
            window_accepted += usize::from(accepted);
            if (it + 1) % settings.adapt_interval == 0 {
                let rate = window_accepted as f64 / settings.adapt_interval as f64;
                proposal.scale *= (2.0 * (rate - settings.target_acceptance)).exp();
                window_accepted = 0;
            }
            if use_empirical {
                if it >= burn / 4 {
                    burn_draws.push(current.clone());
                }
                if it + 1 == switch_at {
                    let cov = sample_covariance(&burn_draws) * (HAARIO_SCALE / d as f64);
                    if let Some(f) = Factor::new(cov) {
                        proposal = Proposal {
                            chol: f.lower().clone(),
                            scale: 1.0,
                        };
                        window_accepted = 0;
                        log::debug!("chain {seed}: switched to the empirical proposal covariance");
                    }
                    burn_draws = Vec::new();
                }
            }
        } else {
            accepted_after += usize::from(accepted);
            let k = it - burn;
            if (k + 1) % settings.thin == 0 {
                run.samples.push(current.clone());
                run.log_post.push(current_lp);
                run.iteration.push(it);
            }
        }
    }
    run.acceptance = accepted_after as f64 / (settings.n_samples * settings.thin) as f64;
    Ok(run)
}

/// Adaptive random-walk Metropolis started at the prior nominal value.
///
/// During burn-in the proposal scale is tuned every `adapt_interval`
/// iterations toward `target_acceptance`, and halfway through the proposal
/// shape switches to the scaled empirical covariance of the second burn-in
/// quarter. The proposal is frozen afterwards, so retained draws come from a
/// time-homogeneous chain.
pub fn mcmc_sample<F>(mut log_post: F, prior: &PriorSpec, settings: &McmcSettings) -> Result<PosteriorChain>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    settings.validate()?;
    let mut out = PosteriorChain {
        names: prior.names().to_vec(),
        samples: Vec::new(),
        log_post: Vec::new(),
        chain: Vec::new(),
        iteration: Vec::new(),
        acceptance: Vec::new(),
        burn_in: settings.burn_in(),
        thin: settings.thin,
        seeds: Vec::new(),
    };
    for k in 0..settings.n_chains {
        let seed = settings.seed.wrapping_add(k as u64);
        let run = run_chain(&mut log_post, prior, settings, seed)?;
        log::info!("chain {k}: acceptance {:.3}", run.acceptance);
        if run.acceptance < MIN_ACCEPTANCE {
            return Err(Error::Diagnostics(format!(
                "chain {k} accepted {:.4} of proposals after adaptation (minimum {MIN_ACCEPTANCE})",
                run.acceptance
            )));
        }
        out.chain.extend(std::iter::repeat_n(k, run.samples.len()));
        out.samples.extend(run.samples);
        out.log_post.extend(run.log_post);
        out.iteration.extend(run.iteration);
        out.acceptance.push(run.acceptance);
        out.seeds.push(seed);
    }
    Ok(out)
}
