use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regression trend `fᵀ(x) β` of the Kriging model. Basis functions act on
/// scaled inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrendSpec {
    /// Simple Kriging: known mean `mu` in physical output units.
    KnownConstant { mu: f64 },
    /// Ordinary Kriging.
    Constant,
    /// Universal Kriging with `1, x_1, …, x_d`.
    Linear,
    /// Universal Kriging with monomials; each entry holds one exponent per input.
    Custom { monomials: Vec<Vec<u32>> },
}

impl TrendSpec {
    pub fn n_basis(&self, dim: usize) -> usize {
        match self {
            TrendSpec::KnownConstant { .. } => 0,
            TrendSpec::Constant => 1,
            TrendSpec::Linear => dim + 1,
            TrendSpec::Custom { monomials } => monomials.len(),
        }
    }

    pub fn known_mean(&self) -> Option<f64> {
        match self {
            TrendSpec::KnownConstant { mu } => Some(*mu),
            _ => None,
        }
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        if let TrendSpec::Custom { monomials } = self {
            if monomials.is_empty() {
                return Err(Error::invalid("custom trend needs at least one monomial"));
            }
            if let Some(m) = monomials.iter().find(|m| m.len() != dim) {
                return Err(Error::invalid(format!(
                    "monomial {m:?} has {} exponents for {dim} inputs",
                    m.len()
                )));
            }
        }
        Ok(())
    }

    /// `f(x)` at one scaled point.
    pub fn basis(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TrendSpec::KnownConstant { .. } => Vec::new(),
            TrendSpec::Constant => vec![1.0],
            TrendSpec::Linear => std::iter::once(1.0).chain(x.iter().copied()).collect(),
            TrendSpec::Custom { monomials } => monomials
                .iter()
                .map(|e| x.iter().zip(e).map(|(v, k)| v.powi(*k as i32)).product())
                .collect(),
        }
    }

    /// `F`, one row per point.
    pub fn basis_matrix(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.first().map_or(0, |p| self.n_basis(p.len()));
        let mut f = DMatrix::zeros(points.len(), n);
        for (i, p) in points.iter().enumerate() {
            for (j, v) in self.basis(p).into_iter().enumerate() {
                f[(i, j)] = v;
            }
        }
        f
    }
}

impl std::str::FromStr for TrendSpec {
    type Err = Error;

    /// `constant`, `linear`, `known:<mu>` or `custom:<e,e;e,e;…>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unknown trend `{s}`"));
        match s {
            "constant" | "ordinary" => Ok(TrendSpec::Constant),
            "linear" | "universal" => Ok(TrendSpec::Linear),
            _ => {
                if let Some(mu) = s.strip_prefix("known:") {
                    let mu = mu.trim().parse().map_err(|_| bad())?;
                    Ok(TrendSpec::KnownConstant { mu })
                } else if let Some(body) = s.strip_prefix("custom:") {
                    let monomials = body
                        .split(';')
                        .map(|m| {
                            m.split(',')
                                .map(|e| e.trim().parse::<u32>())
                                .collect::<Result<Vec<_>, _>>()
                        })
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad())?;
                    Ok(TrendSpec::Custom { monomials })
                } else {
                    Err(bad())
                }
            }
        }
    }
}
