use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Role of an experiment row: calibration (IUQ) or validation (VAL).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "IUQ")]
    Iuq,
    #[serde(rename = "VAL")]
    Val,
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IUQ" => Ok(Domain::Iuq),
            "VAL" => Ok(Domain::Val),
            other => Err(Error::invalid(format!(
                "unknown domain tag {other:?}, expected IUQ or VAL"
            ))),
        }
    }
}

/// Measured QoIs at design-variable settings, with measurement-noise covariance.
///
/// Observations are stacked QoI-major: entry `q * n_rows + i` is QoI `q` at row `i`.
/// The noise covariance is over that stacked vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    x_names: Vec<String>,
    qoi_names: Vec<String>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    noise: DMatrix<f64>,
    domains: Option<Vec<Domain>>,
}

impl ExperimentData {
    /// Rows with independent noise; `variance[i][q]` is the variance of QoI `q` at row `i`.
    pub fn new(
        x_names: Vec<String>,
        qoi_names: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        variance: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = x.len();
        let q = qoi_names.len();
        check_dim(n, variance.len())?;
        for v in &variance {
            check_dim(q, v.len())?;
        }
        let mut noise = DMatrix::zeros(n * q, n * q);
        for (i, v) in variance.iter().enumerate() {
            for (k, s) in v.iter().enumerate() {
                noise[(k * n + i, k * n + i)] = *s;
            }
        }
        Self::with_covariance(x_names, qoi_names, x, y, noise)
    }

    /// Rows with a full noise covariance over the stacked observations.
    pub fn with_covariance(
        x_names: Vec<String>,
        qoi_names: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        noise: DMatrix<f64>,
    ) -> Result<Self> {
        let n = x.len();
        let q = qoi_names.len();
        if n == 0 || q == 0 {
            return Err(Error::invalid("experiment data needs at least one row and one QoI"));
        }
        check_dim(n, y.len())?;
        for row in &x {
            check_dim(x_names.len(), row.len())?;
        }
        for row in &y {
            check_dim(q, row.len())?;
        }
        check_dim(n * q, noise.nrows())?;
        check_dim(n * q, noise.ncols())?;
        if x.iter().chain(&y).flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("experiment values must be finite"));
        }
        if (0..n * q).any(|i| !(noise[(i, i)] > 0.0 && noise[(i, i)].is_finite())) {
            return Err(Error::invalid("measurement variances must be positive"));
        }
        if (noise.clone() - noise.transpose()).amax() > 1e-12 * noise.amax() {
            return Err(Error::invalid("measurement covariance must be symmetric"));
        }
        Ok(ExperimentData {
            x_names,
            qoi_names,
            x,
            y,
            noise,
            domains: None,
        })
    }

    pub fn with_domains(mut self, domains: Vec<Domain>) -> Result<Self> {
        check_dim(self.n_rows(), domains.len())?;
        self.domains = Some(domains);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_qoi(&self) -> usize {
        self.qoi_names.len()
    }

    pub fn x_dim(&self) -> usize {
        self.x_names.len()
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn qoi_names(&self) -> &[String] {
        &self.qoi_names
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// Observations per row, one entry per QoI.
    pub fn y(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn domains(&self) -> Option<&[Domain]> {
        self.domains.as_deref()
    }

    /// Observations of one QoI across rows.
    pub fn qoi(&self, q: usize) -> Vec<f64> {
        self.y.iter().map(|r| r[q]).collect()
    }

    /// All observations stacked QoI-major.
    pub fn stacked(&self) -> Vec<f64> {
        (0..self.n_qoi()).flat_map(|q| self.qoi(q)).collect()
    }

    /// `Σ_exp` over the stacked observations.
    pub fn noise_covariance(&self) -> &DMatrix<f64> {
        &self.noise
    }

    /// Noise variances of one QoI across rows.
    pub fn noise_variance(&self, q: usize) -> Vec<f64> {
        let n = self.n_rows();
        (0..n).map(|i| self.noise[(q * n + i, q * n + i)]).collect()
    }

    /// Rows `rows` in the given order, keeping the matching covariance block.
    pub fn subset(&self, rows: &[usize]) -> Result<ExperimentData> {
        let n = self.n_rows();
        if let Some(bad) = rows.iter().find(|i| **i >= n) {
            return Err(Error::invalid(format!("row {bad} out of range for {n} rows")));
        }
        let q = self.n_qoi();
        let k = rows.len();
        let idx: Vec<usize> = (0..q).flat_map(|qq| rows.iter().map(move |i| qq * n + i)).collect();
        let noise = DMatrix::from_fn(k * q, k * q, |a, b| self.noise[(idx[a], idx[b])]);
        let mut out = ExperimentData::with_covariance(
            self.x_names.clone(),
            self.qoi_names.clone(),
            rows.iter().map(|i| self.x[*i].clone()).collect(),
            rows.iter().map(|i| self.y[*i].clone()).collect(),
            noise,
        )?;
        if let Some(d) = &self.domains {
            out.domains = Some(rows.iter().map(|i| d[*i]).collect());
        }
        Ok(out)
    }
}

/// How experiment rows are divided between calibration and validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Split {
    /// Zero-based row indices for each side.
    Explicit { iuq: Vec<usize>, val: Vec<usize> },
    /// Seeded random bipartition with `round(iuq_fraction · n)` calibration rows.
    Fraction { iuq_fraction: f64, seed: u64 },
    /// Use the per-row domain tags of the data.
    Tagged,
}

/// Splits experiments into disjoint, nonempty calibration and validation sets.
pub fn split_experiments(data: &ExperimentData, split: &Split) -> Result<(ExperimentData, ExperimentData)> {
    let n = data.n_rows();
    let (iuq, val) = match split {
        Split::Explicit { iuq, val } => (iuq.clone(), val.clone()),
        Split::Fraction { iuq_fraction, seed } => {
            if !(*iuq_fraction > 0.0 && *iuq_fraction < 1.0) {
                return Err(Error::invalid("split fraction must lie strictly between 0 and 1"));
            }
            if n < 2 {
                return Err(Error::invalid("splitting needs at least two rows"));
            }
            let k = ((iuq_fraction * n as f64).round() as usize).clamp(1, n - 1);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let mut iuq = idx[..k].to_vec();
            let mut val = idx[k..].to_vec();
            iuq.sort_unstable();
            val.sort_unstable();
            (iuq, val)
        }
        Split::Tagged => {
            let tags = data
                .domains()
                .ok_or_else(|| Error::invalid("tagged split requested but the data carry no domain column"))?;
            let pick = |d: Domain| (0..n).filter(|i| tags[*i] == d).collect::<Vec<_>>();
            (pick(Domain::Iuq), pick(Domain::Val))
        }
    };
    if iuq.is_empty() || val.is_empty() {
        return Err(Error::invalid("both calibration and validation sets must be nonempty"));
    }
    let mut seen = vec![false; n];
    for &i in iuq.iter().chain(&val) {
        if i >= n {
            return Err(Error::invalid(format!("row {i} out of range for {n} rows")));
        }
        if seen[i] {
            return Err(Error::invalid(format!(
                "row {i} assigned twice; the same data must not serve calibration and validation"
            )));
        }
        seen[i] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!(
            "row {i} is assigned to neither calibration nor validation"
        )));
    }
    Ok((data.subset(&iuq)?, data.subset(&val)?))
}
