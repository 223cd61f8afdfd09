//! Stationary correlation kernels and the correlation matrices built from them.
//!
//! Every kernel is a tensor product of a one-dimensional correlation over the
//! per-dimension separation `h_k = |x_k - x'_k|` with its own length-scale
//! `ω_k`. The power-exponential kernel is `exp(-Σ_k |h_k|^{p_k} / ω_k)`, i.e.
//! the exponential of [`weighted_distance`]; the other kinds use their
//! one-dimensional forms literally:
//!
//! | kind               | `R(h)`                                             |
//! |--------------------|----------------------------------------------------|
//! | linear             | `max(0, 1 - h/ω)`                                  |
//! | exponential        | `exp(-h/ω)`                                        |
//! | gaussian           | `exp(-h² / 2ω²)`                                   |
//! | matern_3_2         | `(1 + √3 h/ω) exp(-√3 h/ω)`                        |
//! | matern_5_2         | `(1 + √5 h/ω + 5h²/3ω²) exp(-√5 h/ω)`              |
//!
//! Products of one-dimensional positive-definite kernels are positive definite
//! (Schur product theorem), so the tensor-product linear kernel is admissible
//! in any dimension.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Factor;

/// Default diagonal jitter for scaled data.
pub const DEFAULT_NUGGET: f64 = 1e-10;
/// Largest jitter the automatic escalation will try.
pub const MAX_NUGGET: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Exponential,
    PowerExponential,
    Gaussian,
    #[serde(rename = "matern_3_2")]
    Matern32,
    #[serde(rename = "matern_5_2")]
    Matern52,
}

impl KernelKind {
    pub const ALL: [KernelKind; 6] = [
        KernelKind::Linear,
        KernelKind::Exponential,
        KernelKind::PowerExponential,
        KernelKind::Gaussian,
        KernelKind::Matern32,
        KernelKind::Matern52,
    ];

    /// One-dimensional correlation at separation `h ≥ 0`.
    fn correlation_1d(self, h: f64, omega: f64, p: f64) -> f64 {
        let h = h.abs();
        match self {
            KernelKind::Linear => (1.0 - h / omega).max(0.0),
            KernelKind::Exponential => (-h / omega).exp(),
            KernelKind::PowerExponential => (-h.powf(p) / omega).exp(),
            KernelKind::Gaussian => (-h * h / (2.0 * omega * omega)).exp(),
            KernelKind::Matern32 => {
                let s = 3f64.sqrt() * h / omega;
                (1.0 + s) * (-s).exp()
            }
            KernelKind::Matern52 => {
                let s = 5f64.sqrt() * h / omega;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown kernel kind `{s}`")))
    }
}

/// Kernel kind with per-dimension length-scales `omega` and roughness `p`.
///
/// `p` only matters for the power-exponential kernel; the Gaussian kernel
/// always carries `p = 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub omega: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Deserialize)]
struct RawKernelSpec {
    kind: KernelKind,
    omega: Vec<f64>,
    #[serde(default)]
    p: Vec<f64>,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        if raw.p.is_empty() || raw.kind == KernelKind::Gaussian {
            KernelSpec::new(raw.kind, raw.omega)
        } else {
            KernelSpec::with_roughness(raw.kind, raw.omega, raw.p)
        }
    }
}

impl KernelSpec {
    /// Kernel with default roughness `p_k = 2`.
    pub fn new(kind: KernelKind, omega: Vec<f64>) -> Result<Self> {
        let p = vec![2.0; omega.len()];
        Self::with_roughness(kind, omega, p)
    }

    pub fn with_roughness(kind: KernelKind, omega: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        check_dim(omega.len(), p.len())?;
        if omega.is_empty() {
            return Err(Error::invalid("kernel needs at least one dimension"));
        }
        if let Some(w) = omega.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!("length-scale must be positive, got {w}")));
        }
        let p = if kind == KernelKind::Gaussian {
            vec![2.0; omega.len()]
        } else {
            p
        };
        if kind == KernelKind::PowerExponential {
            if let Some(pk) = p.iter().find(|pk| !(0.0..=2.0).contains(*pk)) {
                return Err(Error::invalid(format!("roughness must lie in [0, 2], got {pk}")));
            }
        }
        Ok(KernelSpec { kind, omega, p })
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    /// Correlation between two points, without nugget.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.dim());
        debug_assert_eq!(b.len(), self.dim());
        if self.kind == KernelKind::PowerExponential {
            return (-raw_weighted_distance(a, b, &self.omega, &self.p)).exp();
        }
        let mut r = 1.0;
        for k in 0..a.len() {
            r *= self.kind.correlation_1d(a[k] - b[k], self.omega[k], self.p[k]);
            if r == 0.0 {
                break;
            }
        }
        r
    }
}

fn raw_weighted_distance(a: &[f64], b: &[f64], omega: &[f64], p: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(omega.iter().zip(p))
        .filter(|((x, y), _)| x != y)
        .map(|((x, y), (w, pk))| (x - y).abs().powf(*pk) / w)
        .sum()
}

/// `Σ_k |a_k - b_k|^{p_k} / ω_k`.
pub fn weighted_distance(a: &[f64], b: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_dim(spec.dim(), a.len())?;
    check_dim(spec.dim(), b.len())?;
    Ok(raw_weighted_distance(a, b, &spec.omega, &spec.p))
}

pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(spec.dim(), a.len())?;
    check_dim(spec.dim(), b.len())?;
    Ok(spec.eval(a, b))
}

/// Correlation vector `r(x*)` against every row of `points`.
pub fn cross_correlation(points: &[Vec<f64>], x_star: &[f64], spec: &KernelSpec) -> Result<DVector<f64>> {
    check_dim(spec.dim(), x_star.len())?;
    for p in points {
        check_dim(spec.dim(), p.len())?;
    }
    Ok(DVector::from_iterator(
        points.len(),
        points.iter().map(|p| spec.eval(x_star, p)),
    ))
}

/// `K[i][j] = R(a_i, b_j)`.
pub fn cross_matrix(a: &[Vec<f64>], b: &[Vec<f64>], spec: &KernelSpec) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| spec.eval(&a[i], &b[j]))
}

/// Symmetric correlation matrix of a design with its cached factorization.
///
/// The diagonal is `1 + τ² + noise_i`, where `τ²` is the (possibly escalated)
/// nugget and `noise_i` an optional per-site term.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
    nugget: f64,
    noise: Vec<f64>,
    factor: Factor,
}

impl CorrelationMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Nugget actually applied, after any escalation.
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }
}

/// Builds and factorizes the correlation matrix of `points` (scaled inputs).
///
/// On factorization failure the nugget is multiplied by 10 until it exceeds
/// [`MAX_NUGGET`]; a zero nugget is never escalated.
pub fn correlation_matrix(points: &[Vec<f64>], spec: &KernelSpec, nugget: f64) -> Result<CorrelationMatrix> {
    correlation_matrix_with_noise(points, spec, nugget, &vec![0.0; points.len()])
}

pub fn correlation_matrix_with_noise(
    points: &[Vec<f64>],
    spec: &KernelSpec,
    nugget: f64,
    noise: &[f64],
) -> Result<CorrelationMatrix> {
    if points.is_empty() {
        return Err(Error::invalid("correlation matrix needs at least one site"));
    }
    check_dim(points.len(), noise.len())?;
    for p in points {
        check_dim(spec.dim(), p.len())?;
    }
    if !(nugget >= 0.0 && nugget.is_finite()) || noise.iter().any(|n| !(*n >= 0.0 && n.is_finite())) {
        return Err(Error::invalid("nugget and noise terms must be finite and nonnegative"));
    }
    let m = points.len();
    let mut base = DMatrix::zeros(m, m);
    for i in 0..m {
        base[(i, i)] = 1.0 + noise[i];
        for j in 0..i {
            let r = spec.eval(&points[i], &points[j]);
            base[(i, j)] = r;
            base[(j, i)] = r;
        }
    }
    let mut tau2 = nugget;
    loop {
        let mut entries = base.clone();
        for i in 0..m {
            entries[(i, i)] += tau2;
        }
        if let Some(factor) = Factor::new(entries.clone()) {
            if tau2 > nugget {
                log::debug!("correlation matrix needed nugget escalation {nugget:e} -> {tau2:e}");
            }
            return Ok(CorrelationMatrix {
                entries,
                nugget: tau2,
                noise: noise.to_vec(),
                factor,
            });
        }
        let next = tau2 * 10.0;
        if tau2 == 0.0 || next > MAX_NUGGET * (1.0 + 1e-9) {
            return Err(Error::IllConditioned { nugget: tau2 });
        }
        tau2 = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec1(kind: KernelKind, omega: f64) -> KernelSpec {
        KernelSpec::new(kind, vec![omega]).unwrap()
    }

    #[test]
    fn weighted_distance_examples() {
        let s = KernelSpec::with_roughness(KernelKind::PowerExponential, vec![1.0], vec![2.0]).unwrap();
        assert_eq!(weighted_distance(&[0.3], &[0.3], &s).unwrap(), 0.0);
        assert_relative_eq!(weighted_distance(&[0.0], &[0.5], &s).unwrap(), 0.25);
        let s2 = KernelSpec::with_roughness(KernelKind::PowerExponential, vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert_relative_eq!(weighted_distance(&[0.0, 0.0], &[1.0, 1.0], &s2).unwrap(), 1.5);
        assert!(matches!(
            weighted_distance(&[0.0], &[1.0, 1.0], &s2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kernel_values() {
        for kind in KernelKind::ALL {
            assert_eq!(spec1(kind, 0.7).eval(&[0.2], &[0.2]), 1.0);
        }
        assert_relative_eq!(
            spec1(KernelKind::Gaussian, 0.4).eval(&[0.0], &[0.4]),
            (-0.5f64).exp(),
            epsilon = 1e-15
        );
        assert_eq!(spec1(KernelKind::Linear, 0.3).eval(&[0.0], &[0.3]), 0.0);
        assert_eq!(spec1(KernelKind::Linear, 0.3).eval(&[0.0], &[0.9]), 0.0);
        let m = spec1(KernelKind::Matern32, 0.2);
        let mut prev = 1.0;
        for i in 1..200 {
            let v = m.eval(&[0.0], &[i as f64 * 0.05]);
            assert!(v <= prev && v >= 0.0);
            prev = v;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn gaussian_matrix_matches_hand_oracle() {
        let pts = vec![vec![0.0], vec![0.5], vec![1.0]];
        let c = correlation_matrix(&pts, &spec1(KernelKind::Gaussian, 1.0), 0.0).unwrap();
        let a = (-0.125f64).exp();
        let b = (-0.5f64).exp();
        let oracle = DMatrix::from_row_slice(3, 3, &[1.0, a, b, a, 1.0, a, b, a, 1.0]);
        for (x, y) in c.entries().iter().zip(oracle.iter()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn single_site_and_duplicates() {
        let c = correlation_matrix(&[vec![0.3]], &spec1(KernelKind::Gaussian, 1.0), 1e-3).unwrap();
        assert_eq!(c.entries()[(0, 0)], 1.0 + 1e-3);
        let dup = vec![vec![0.3], vec![0.3]];
        assert!(matches!(
            correlation_matrix(&dup, &spec1(KernelKind::Gaussian, 1.0), 0.0),
            Err(Error::IllConditioned { .. })
        ));
        let esc = correlation_matrix(&dup, &spec1(KernelKind::Gaussian, 1.0), 1e-10).unwrap();
        assert!(esc.nugget() >= 1e-10 && esc.nugget() <= MAX_NUGGET);
    }

    #[test]
    fn cross_correlation_cases() {
        let pts = vec![vec![0.0, 0.0], vec![0.5, 0.2]];
        let s = KernelSpec::new(KernelKind::Gaussian, vec![0.1, 0.1]).unwrap();
        let r = cross_correlation(&pts, &[0.5, 0.2], &s).unwrap();
        assert_eq!(r[1], 1.0);
        let far = cross_correlation(&[vec![0.0]], &[0.6], &spec1(KernelKind::Gaussian, 0.1)).unwrap();
        assert!(far[0] < 1e-6);
        assert_eq!(
            cross_correlation(&[], &[0.6], &spec1(KernelKind::Gaussian, 0.1))
                .unwrap()
                .len(),
            0
        );
    }

    #[test]
    fn length_scale_and_roughness_monotonicity() {
        for i in 1..20 {
            let h = i as f64 * 0.1;
            let mut prev = 0.0;
            for w in [0.1, 0.3, 1.0, 3.0, 10.0] {
                let s = KernelSpec::with_roughness(KernelKind::PowerExponential, vec![w], vec![2.0]).unwrap();
                let v = s.eval(&[0.0], &[h]);
                assert!(v > prev);
                prev = v;
            }
            if h < 1.0 {
                let mut prev = 0.0;
                for p in [0.5, 1.0, 1.5, 2.0] {
                    let s = KernelSpec::with_roughness(KernelKind::PowerExponential, vec![1.0], vec![p]).unwrap();
                    let v = s.eval(&[0.0], &[h]);
                    assert!(v > prev);
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn spec_validation_and_json() {
        assert!(KernelSpec::new(KernelKind::Gaussian, vec![0.0]).is_err());
        assert!(KernelSpec::with_roughness(KernelKind::PowerExponential, vec![1.0], vec![2.5]).is_err());
        let g = KernelSpec::with_roughness(KernelKind::Gaussian, vec![1.0], vec![0.5]).unwrap();
        assert_eq!(g.p, vec![2.0]);
        let s: KernelSpec = serde_json::from_str(r#"{"kind":"matern_5_2","omega":[0.2,0.4]}"#).unwrap();
        assert_eq!(s.kind, KernelKind::Matern52);
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<KernelSpec>(r#"{"kind":"gaussian","omega":[-1]}"#).is_err());
    }

    #[test]
    fn distinct_designs_factorize_for_every_kind() {
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0])
            .collect();
        for kind in KernelKind::ALL {
            let s = KernelSpec::new(kind, vec![0.3, 0.5]).unwrap();
            let c = correlation_matrix(&pts, &s, DEFAULT_NUGGET).unwrap();
            assert_eq!(c.nugget(), DEFAULT_NUGGET);
        }
    }

    fn kind_strategy() -> impl Strategy<Value = KernelKind> {
        prop::sample::select(KernelKind::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn symmetric_unit_diagonal_in_range(
            kind in kind_strategy(),
            a in prop::collection::vec(0.0..1.0f64, 3),
            b in prop::collection::vec(0.0..1.0f64, 3),
            omega in prop::collection::vec(0.05..5.0f64, 3),
            p in prop::collection::vec(0.0..=2.0f64, 3),
        ) {
            let s = KernelSpec::with_roughness(kind, omega, p).unwrap();
            prop_assert_eq!(s.eval(&a, &b), s.eval(&b, &a));
            prop_assert_eq!(s.eval(&a, &a), 1.0);
            let v = s.eval(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
