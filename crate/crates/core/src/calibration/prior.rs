use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, LogNormal, Normal};

use crate::design::ParameterSpace;
use crate::error::{check_dim, Error, Result};

/// Probabilities this close to 0 or 1 are clamped before inverting an
/// unbounded CDF.
const CDF_EPS: f64 = 1e-12;

/// Marginal prior of one calibration parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Marginal {
    Uniform {
        lower: f64,
        upper: f64,
    },
    Normal {
        mean: f64,
        std: f64,
    },
    /// `ln θ ~ N(mu, sigma²)`.
    Lognormal {
        mu: f64,
        sigma: f64,
    },
}

impl Marginal {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Uniform { lower, upper } => lower.is_finite() && upper.is_finite() && lower < upper,
            Marginal::Normal { mean, std } => mean.is_finite() && std.is_finite() && std > 0.0,
            Marginal::Lognormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid prior parameters {self:?}")))
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Marginal::Uniform { lower, upper } => (lower..=upper).contains(&x),
            Marginal::Normal { .. } => x.is_finite(),
            Marginal::Lognormal { .. } => x > 0.0 && x.is_finite(),
        }
    }

    /// Log density; `-∞` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Marginal::Uniform { lower, upper } => -(upper - lower).ln(),
            Marginal::Normal { mean, std } => normal(mean, std).ln_pdf(x),
            Marginal::Lognormal { mu, sigma } => lognormal(mu, sigma).ln_pdf(x),
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => lower + u.clamp(0.0, 1.0) * (upper - lower),
            Marginal::Normal { mean, std } => normal(mean, std).inverse_cdf(u.clamp(CDF_EPS, 1.0 - CDF_EPS)),
            Marginal::Lognormal { mu, sigma } => lognormal(mu, sigma).inverse_cdf(u.clamp(CDF_EPS, 1.0 - CDF_EPS)),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => 0.5 * (lower + upper),
            Marginal::Normal { mean, .. } => mean,
            Marginal::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
        }
    }

    /// Standard deviation; `range/√12` for uniform priors.
    pub fn std_dev(&self) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => (upper - lower) / 12f64.sqrt(),
            Marginal::Normal { std, .. } => std,
            Marginal::Lognormal { mu, sigma } => ((sigma * sigma).exp_m1() * (2.0 * mu + sigma * sigma).exp()).sqrt(),
        }
    }
}

fn normal(mean: f64, std: f64) -> Normal {
    Normal::new(mean, std).expect("validated normal parameters")
}

fn lognormal(mu: f64, sigma: f64) -> LogNormal {
    LogNormal::new(mu, sigma).expect("validated lognormal parameters")
}

/// Independent priors over the calibration parameters with a nominal value `θ⁰`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior")]
pub struct PriorSpec {
    names: Vec<String>,
    marginals: Vec<Marginal>,
    nominal: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPrior {
    names: Vec<String>,
    marginals: Vec<Marginal>,
    #[serde(default)]
    nominal: Option<Vec<f64>>,
}

impl TryFrom<RawPrior> for PriorSpec {
    type Error = Error;

    fn try_from(raw: RawPrior) -> Result<Self> {
        PriorSpec::new(raw.names, raw.marginals, raw.nominal)
    }
}

impl PriorSpec {
    /// `nominal` defaults to the prior means.
    pub fn new(names: Vec<String>, marginals: Vec<Marginal>, nominal: Option<Vec<f64>>) -> Result<Self> {
        check_dim(names.len(), marginals.len())?;
        if names.is_empty() {
            return Err(Error::invalid("prior needs at least one parameter"));
        }
        for m in &marginals {
            m.validate()?;
        }
        let nominal = nominal.unwrap_or_else(|| marginals.iter().map(Marginal::mean).collect());
        check_dim(names.len(), nominal.len())?;
        if let Some(k) = (0..names.len()).find(|k| !marginals[*k].contains(nominal[*k])) {
            return Err(Error::invalid(format!(
                "nominal value of {} lies outside its prior support",
                names[k]
            )));
        }
        Ok(PriorSpec {
            names,
            marginals,
            nominal,
        })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    /// `θ⁰`
    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && self.marginals.iter().zip(theta).all(|(m, t)| m.contains(*t))
    }

    /// Log prior density; `-∞` outside the support.
    pub fn ln_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.dim() {
            return f64::NEG_INFINITY;
        }
        self.marginals.iter().zip(theta).map(|(m, t)| m.ln_pdf(*t)).sum()
    }

    /// Maps a unit-cube point through the marginal inverse CDFs.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.marginals.iter().zip(u).map(|(m, v)| m.inverse_cdf(*v)).collect()
    }

    pub fn std_devs(&self) -> Vec<f64> {
        self.marginals.iter().map(Marginal::std_dev).collect()
    }

    /// Box covering the central `1 − 2·1e-12` mass of each marginal.
    pub fn bounding_space(&self) -> Result<ParameterSpace> {
        ParameterSpace::new(
            self.names.clone(),
            self.marginals.iter().map(|m| m.inverse_cdf(0.0)).collect(),
            self.marginals.iter().map(|m| m.inverse_cdf(1.0)).collect(),
        )
    }
}
