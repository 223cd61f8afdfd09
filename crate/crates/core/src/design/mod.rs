//! Space-filling and adaptive experimental designs on the unit hypercube.
//!
//! Designs are generated in `[0, 1]^d` and mapped affinely onto a
//! [`ParameterSpace`] box. Sobol points use the Joe & Kuo
//! `new-joe-kuo-6.21201` direction numbers (first [`MAX_SOBOL_DIM`]
//! dimensions) and skip the all-zeros point.

mod adaptive;
mod directions;
mod lhs;
mod sequence;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use adaptive::adaptive_enrich;
pub use directions::MAX_SOBOL_DIM;
pub use lhs::{lhs_design, lhs_design_with, maximin_lhs, LhsPlacement};
pub use sequence::{halton_sequence, sobol_sequence, MAX_HALTON_DIM};

/// Named box of parameter ranges in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct ParameterSpace {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSpace {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawSpace> for ParameterSpace {
    type Error = Error;
    fn try_from(r: RawSpace) -> Result<Self> {
        ParameterSpace::new(r.names, r.lower, r.upper)
    }
}

impl ParameterSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(names.len(), lower.len())?;
        check_dim(names.len(), upper.len())?;
        if names.is_empty() {
            return Err(Error::invalid("parameter space needs at least one dimension"));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "bounds of `{}` must satisfy lower < upper",
                    names[k]
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::invalid(format!("duplicate parameter name `{dup}`")));
        }
        Ok(ParameterSpace { names, lower, upper })
    }

    /// `[0, 1]^d` with names `x1, x2, …`.
    pub fn unit(dim: usize) -> Self {
        let names = (1..=dim).map(|k| format!("x{k}")).collect();
        ParameterSpace::new(names, vec![0.0; dim], vec![1.0; dim]).expect("valid unit cube")
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Physical point to unit-cube coordinates.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    /// Unit-cube coordinates to a physical point.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| lo + v * (hi - lo))
            .collect()
    }

    /// Concatenation of two spaces (e.g. design variables then calibration parameters).
    pub fn join(&self, other: &ParameterSpace) -> Result<ParameterSpace> {
        ParameterSpace::new(
            [self.names.as_slice(), &other.names].concat(),
            [self.lower.as_slice(), &other.lower].concat(),
            [self.upper.as_slice(), &other.upper].concat(),
        )
    }
}

/// `m × d` design stored in unit-cube coordinates, tied to the space it maps onto.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    points: Vec<Vec<f64>>,
    space: ParameterSpace,
}

impl DesignMatrix {
    pub fn new(points: Vec<Vec<f64>>, space: ParameterSpace) -> Result<Self> {
        for p in &points {
            check_dim(space.dim(), p.len())?;
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid("design coordinates must lie in [0, 1]"));
            }
        }
        Ok(DesignMatrix { points, space })
    }

    pub fn from_physical(rows: &[Vec<f64>], space: ParameterSpace) -> Result<Self> {
        let points = rows.iter().map(|r| space.to_unit(r)).collect();
        Self::new(points, space)
    }

    pub fn unit_points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn physical_points(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| self.space.from_unit(p)).collect()
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Smallest pairwise Euclidean distance in the unit cube (`∞` below two points).
    pub fn min_distance(&self) -> f64 {
        min_pairwise_distance(&self.points)
    }
}

pub(crate) fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d2);
        }
    }
    best.sqrt()
}

/// Generation method, as recorded alongside emitted designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DesignMethod {
    Lhs { seed: u64 },
    Maximin { seed: u64, restarts: usize },
    Sobol { skip: u64 },
    Halton { skip: u64 },
}

impl DesignMethod {
    pub fn generate(&self, n: usize, space: &ParameterSpace) -> Result<DesignMatrix> {
        match *self {
            DesignMethod::Lhs { seed } => lhs_design(n, space, seed),
            DesignMethod::Maximin { seed, restarts } => maximin_lhs(n, space, restarts, seed),
            DesignMethod::Sobol { skip } => sobol_sequence(n, space, skip),
            DesignMethod::Halton { skip } => halton_sequence(n, space, skip),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space2() -> ParameterSpace {
        ParameterSpace::new(vec!["a".into(), "b".into()], vec![-3.0, 1e3], vec![5.0, 2e3]).unwrap()
    }

    #[test]
    fn space_validation() {
        assert!(ParameterSpace::new(vec!["a".into()], vec![1.0], vec![1.0]).is_err());
        assert!(ParameterSpace::new(vec!["a".into(), "a".into()], vec![0.0; 2], vec![1.0; 2]).is_err());
        assert!(ParameterSpace::new(vec!["a".into()], vec![0.0, 1.0], vec![1.0]).is_err());
        let s: ParameterSpace = serde_json::from_str(r#"{"names":["x"],"lower":[0],"upper":[2]}"#).unwrap();
        assert_eq!(s.dim(), 1);
        assert!(serde_json::from_str::<ParameterSpace>(r#"{"names":["x"],"lower":[3],"upper":[2]}"#).is_err());
    }

    #[test]
    fn design_rejects_out_of_cube() {
        assert!(DesignMatrix::new(vec![vec![0.5, 1.2]], space2()).is_err());
    }

    proptest! {
        #[test]
        fn scaling_round_trip(u in prop::collection::vec(0.0..=1.0f64, 2)) {
            let s = space2();
            let back = s.to_unit(&s.from_unit(&u));
            for (a, b) in u.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
