//! Hyperparameter estimation: generalized least squares for the trend,
//! concentrated likelihood and K-fold cross-validation for the correlation
//! parameters.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::nelder_mead_box;
use super::{Estimation, FittedEmulator, GpCore, TrainingSet, TrendSpec};
use crate::design::{lhs_design, ParameterSpace};
use crate::error::{Error, Result};
use crate::kernel::{correlation_matrix_with_noise, CorrelationMatrix, KernelKind, KernelSpec, DEFAULT_NUGGET};
use crate::linalg::Factor;

/// Condition-number floor on `L⁻¹F` below which the trend is rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Relative size below which a profiled process variance counts as zero.
const DEGENERATE_SIGMA2: f64 = 1e-20;

/// Floor on `σ̂²` inside the likelihood so exact fits stay finite.
const SIGMA2_FLOOR: f64 = 1e-300;

/// Profiled process variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma2 {
    pub value: f64,
    /// Residuals vanish: the data lie on the trend.
    pub degenerate: bool,
}

/// Treatment of the power-exponential roughness during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Roughness {
    Fixed { p: f64 },
    Free { lower: f64, upper: f64 },
}

impl Default for Roughness {
    fn default() -> Self {
        Roughness::Free { lower: 1.0, upper: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Bounds on every `ω_k`, in scaled input units.
    pub omega_bounds: (f64, f64),
    /// Only used by the power-exponential kernel.
    pub roughness: Roughness,
    pub n_restarts: usize,
    pub seed: u64,
    pub nugget: f64,
    /// Objective evaluations per restart.
    pub max_evals: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            omega_bounds: (1e-3, 1e3),
            roughness: Roughness::default(),
            n_restarts: 8,
            seed: 0,
            nugget: DEFAULT_NUGGET,
            max_evals: 400,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.omega_bounds;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid("length-scale bounds must satisfy 0 < lower <= upper"));
        }
        if self.n_restarts == 0 {
            return Err(Error::invalid("at least one restart is required"));
        }
        match self.roughness {
            Roughness::Fixed { p } if !(0.0..=2.0).contains(&p) => Err(Error::invalid("roughness must lie in [0, 2]")),
            Roughness::Free { lower, upper } if !(0.0 <= lower && lower <= upper && upper <= 2.0) => {
                Err(Error::invalid("roughness bounds must lie in [0, 2]"))
            }
            _ => Ok(()),
        }
    }
}

pub(crate) struct Gls {
    pub(crate) beta: DVector<f64>,
    pub(crate) basis_w: DMatrix<f64>,
    pub(crate) gram: Option<Factor>,
    /// `L⁻¹(y − Fβ̂)`
    pub(crate) resid_w: DVector<f64>,
    /// `L⁻¹ y`
    pub(crate) y_w: DVector<f64>,
}

/// Whitened GLS: `A = L⁻¹F`, `b = L⁻¹y`, `β̂ = (AᵀA)⁻¹Aᵀb`.
pub(crate) fn gls(corr: &CorrelationMatrix, f: &DMatrix<f64>, y: &DVector<f64>) -> Result<Gls> {
    let factor = corr.factor();
    let y_w = factor.solve_lower(y);
    let n = f.ncols();
    if n == 0 {
        return Ok(Gls {
            beta: DVector::zeros(0),
            basis_w: DMatrix::zeros(y.len(), 0),
            gram: None,
            resid_w: y_w.clone(),
            y_w,
        });
    }
    if f.nrows() < n {
        return Err(Error::RankDeficient);
    }
    let basis_w = factor.solve_lower_mat(f);
    let sv = basis_w.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin / smax < RANK_TOLERANCE {
        return Err(Error::RankDeficient);
    }
    let gram = Factor::new(basis_w.transpose() * &basis_w).ok_or(Error::RankDeficient)?;
    let beta = gram.solve(&(basis_w.transpose() * &y_w));
    let resid_w = &y_w - &basis_w * &beta;
    Ok(Gls {
        beta,
        basis_w,
        gram: Some(gram),
        resid_w,
        y_w,
    })
}

fn sigma2_from(g: &Gls) -> Sigma2 {
    let m = g.resid_w.len() as f64;
    let value = g.resid_w.norm_squared() / m;
    let reference = g.y_w.norm_squared() / m;
    if value <= DEGENERATE_SIGMA2 * reference || reference == 0.0 {
        Sigma2 {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Sigma2 {
            value,
            degenerate: false,
        }
    }
}

/// GLS trend coefficients `(FᵀR⁻¹F)⁻¹FᵀR⁻¹y` in physical output units, with
/// the basis evaluated at scaled inputs. Simple Kriging has no coefficients.
pub fn gls_beta(training: &TrainingSet, trend: &TrendSpec, corr: &CorrelationMatrix) -> Result<Vec<f64>> {
    let (f, y) = physical_system(training, trend, corr)?;
    Ok(gls(corr, &f, &y)?.beta.iter().copied().collect())
}

/// `σ̂² = (1/m)(y − Fβ)ᵀR⁻¹(y − Fβ)` in physical output units.
pub fn sigma2_hat(training: &TrainingSet, trend: &TrendSpec, beta: &[f64], corr: &CorrelationMatrix) -> Result<Sigma2> {
    let (f, y) = physical_system(training, trend, corr)?;
    crate::error::check_dim(f.ncols(), beta.len())?;
    let resid_w = corr.factor().solve_lower(&(&y - f * DVector::from_column_slice(beta)));
    let y_w = corr.factor().solve_lower(&y);
    Ok(sigma2_from(&Gls {
        beta: DVector::zeros(0),
        basis_w: DMatrix::zeros(0, 0),
        gram: None,
        resid_w,
        y_w,
    }))
}

fn physical_system(
    training: &TrainingSet,
    trend: &TrendSpec,
    corr: &CorrelationMatrix,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    crate::error::check_dim(training.len(), corr.size())?;
    trend.validate(training.dim())?;
    let f = trend.basis_matrix(training.scaled_inputs());
    let mu = trend.known_mean().unwrap_or(0.0);
    let y = DVector::from_iterator(training.len(), training.outputs().iter().map(|v| v - mu));
    Ok((f, y))
}

pub(crate) struct Profile {
    pub(crate) core: GpCore,
    pub(crate) sigma2: Sigma2,
}

/// Profiles `β̂` and `σ̂²` in standardized units for fixed correlation parameters.
pub(crate) fn profile(training: &TrainingSet, trend: &TrendSpec, kernel: &KernelSpec, nugget: f64) -> Result<Profile> {
    let x = training.scaled_inputs();
    let corr = correlation_matrix_with_noise(x, kernel, nugget, &training.site_noise())?;
    let f = trend.basis_matrix(x);
    let mu = trend
        .known_mean()
        .map(|mu| training.output_scaling().standardize(mu))
        .unwrap_or(0.0);
    let y = training.standardized_outputs().add_scalar(-mu);
    let g = gls(&corr, &f, &y)?;
    let sigma2 = sigma2_from(&g);
    let mut alpha = g.resid_w.clone();
    corr.factor().lower().tr_solve_lower_triangular_mut(&mut alpha);
    let core = GpCore {
        corr,
        basis_w: g.basis_w,
        gram: g.gram,
        beta: g.beta,
        alpha,
        mu,
    };
    Ok(Profile { core, sigma2 })
}

/// Concentrated negative log-likelihood
/// `(m/2)·ln(2πσ̂²) + ½·ln|R| + m/2`, in physical output units.
pub fn neg_log_likelihood(training: &TrainingSet, trend: &TrendSpec, spec: &KernelSpec, nugget: f64) -> Result<f64> {
    crate::error::check_dim(training.dim(), spec.dim())?;
    trend.validate(training.dim())?;
    let m = training.len() as f64;
    let std = training.output_scaling().variance_factor().sqrt();
    Ok(standardized_nll(training, trend, spec, nugget)? + m * std.ln())
}

fn standardized_nll(training: &TrainingSet, trend: &TrendSpec, spec: &KernelSpec, nugget: f64) -> Result<f64> {
    let x = training.scaled_inputs();
    let corr = correlation_matrix_with_noise(x, spec, nugget, &training.site_noise())?;
    let f = trend.basis_matrix(x);
    let mu = trend
        .known_mean()
        .map(|mu| training.output_scaling().standardize(mu))
        .unwrap_or(0.0);
    let y = training.standardized_outputs().add_scalar(-mu);
    let g = gls(&corr, &f, &y)?;
    let m = training.len() as f64;
    let s2 = (g.resid_w.norm_squared() / m).max(SIGMA2_FLOOR);
    Ok(0.5 * m * (2.0 * std::f64::consts::PI * s2).ln() + 0.5 * corr.log_det() + 0.5 * m)
}

/// Maps an optimizer vector `[ln ω…, p…]` back to a kernel.
struct Parameterization {
    kind: KernelKind,
    dim: usize,
    free_p: bool,
    fixed_p: f64,
    omega_lo: f64,
    omega_hi: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Parameterization {
    fn new(kind: KernelKind, dim: usize, opts: &FitOptions) -> Self {
        let (lo, hi) = opts.omega_bounds;
        let mut lower = vec![lo.ln(); dim];
        let mut upper = vec![hi.ln(); dim];
        let (free_p, fixed_p) = match (kind, opts.roughness) {
            (KernelKind::PowerExponential, Roughness::Free { lower: pl, upper: pu }) => {
                lower.extend(std::iter::repeat_n(pl, dim));
                upper.extend(std::iter::repeat_n(pu, dim));
                (true, 2.0)
            }
            (_, Roughness::Fixed { p }) => (false, p),
            _ => (false, 2.0),
        };
        Parameterization {
            kind,
            dim,
            free_p,
            fixed_p,
            omega_lo: lo,
            omega_hi: hi,
            lower,
            upper,
        }
    }

    fn kernel(&self, v: &[f64]) -> Result<KernelSpec> {
        let omega = v[..self.dim]
            .iter()
            .map(|l| l.exp().clamp(self.omega_lo, self.omega_hi))
            .collect();
        let p = if self.free_p {
            v[self.dim..].to_vec()
        } else {
            vec![self.fixed_p; self.dim]
        };
        KernelSpec::with_roughness(self.kind, omega, p)
    }

    fn starts(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let space = ParameterSpace::new(
            (0..self.lower.len()).map(|k| format!("v{k}")).collect(),
            self.lower.clone(),
            self.upper
                .iter()
                .zip(&self.lower)
                .map(|(u, l)| if u > l { *u } else { l + 1e-12 })
                .collect(),
        )?;
        let d = lhs_design(n, &space, seed)?;
        Ok(d.physical_points().into_iter().map(|p| self.clamp(p)).collect())
    }

    fn clamp(&self, mut v: Vec<f64>) -> Vec<f64> {
        for (k, x) in v.iter_mut().enumerate() {
            *x = x.clamp(self.lower[k], self.upper[k]);
        }
        v
    }
}

fn multistart<F>(param: &Parameterization, opts: &FitOptions, mut objective: F) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in param.starts(opts.n_restarts, opts.seed)? {
        let min = nelder_mead_box(&mut objective, &start, &param.lower, &param.upper, opts.max_evals);
        if min.value.is_finite() && best.as_ref().is_none_or(|(_, b)| min.value < *b) {
            best = Some((min.x, min.value));
        }
    }
    best.ok_or_else(|| Error::FitFailed(format!("all {} restarts gave a non-finite objective", opts.n_restarts)))
}

fn check_estimable(training: &TrainingSet, trend: &TrendSpec) -> Result<()> {
    trend.validate(training.dim())?;
    let n = trend.n_basis(training.dim());
    if training.len() < n + 1 {
        return Err(Error::invalid(format!(
            "{} training runs cannot estimate a trend with {} coefficients",
            training.len(),
            n
        )));
    }
    Ok(())
}

fn constant_emulator(
    training: &TrainingSet,
    trend: &TrendSpec,
    kind: KernelKind,
    opts: &FitOptions,
) -> Result<FittedEmulator> {
    let param = Parameterization::new(kind, training.dim(), opts);
    let mid: Vec<f64> = param
        .lower
        .iter()
        .zip(&param.upper)
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    FittedEmulator::build(
        training.clone(),
        trend.clone(),
        param.kernel(&mid)?,
        opts.nugget,
        None,
        Estimation::ConstantOutputs,
    )
}

/// Maximum-likelihood fit: multistart box-constrained Nelder–Mead over
/// `ln ω` (and `p` when the power-exponential roughness is free).
pub fn fit_mle(
    training: &TrainingSet,
    trend: &TrendSpec,
    kind: KernelKind,
    opts: &FitOptions,
) -> Result<FittedEmulator> {
    opts.validate()?;
    check_estimable(training, trend)?;
    if training.is_constant() && trend.known_mean().is_none() {
        return constant_emulator(training, trend, kind, opts);
    }
    let param = Parameterization::new(kind, training.dim(), opts);
    let mut last_error = None;
    let objective = |v: &[f64]| match param
        .kernel(v)
        .and_then(|k| standardized_nll(training, trend, &k, opts.nugget))
    {
        Ok(val) => val,
        Err(e) => {
            last_error = Some(e);
            f64::INFINITY
        }
    };
    let (best, _) = multistart(&param, opts, objective).map_err(|e| match &last_error {
        Some(cause) => Error::FitFailed(format!("{e}; last failure: {cause}")),
        None => e,
    })?;
    let kernel = param.kernel(&best)?;
    let nll = neg_log_likelihood(training, trend, &kernel, opts.nugget)?;
    FittedEmulator::build(
        training.clone(),
        trend.clone(),
        kernel,
        opts.nugget,
        None,
        Estimation::Mle {
            neg_log_likelihood: nll,
        },
    )
}

/// Seeded shuffle of `0..m` dealt round-robin into `k` folds, each sorted.
pub fn cv_folds(m: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > m {
        return Err(Error::invalid(format!(
            "fold count must satisfy 2 <= K <= m, got K = {k}, m = {m}"
        )));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Held-out residuals and their (noisy) correlation-scale variances.
pub(crate) struct CvResiduals {
    pub(crate) residuals: Vec<f64>,
    pub(crate) variances: Vec<f64>,
}

pub(crate) fn cv_residuals(core: &GpCore, folds: &[Vec<usize>]) -> Result<CvResiduals> {
    let q = super::q_matrix(core);
    let m = core.alpha.len();
    let mut residuals = vec![0.0; m];
    let mut variances = vec![0.0; m];
    for fold in folds {
        let b = fold.len();
        let qbb = Factor::new(DMatrix::from_fn(b, b, |i, j| q[(fold[i], fold[j])])).ok_or_else(|| {
            Error::NumericalBreakdown("held-out fold leaves too few runs to estimate the trend".into())
        })?;
        let e = qbb.solve(&DVector::from_iterator(b, fold.iter().map(|i| core.alpha[*i])));
        let cov = qbb.inverse();
        for (t, &i) in fold.iter().enumerate() {
            residuals[i] = e[t];
            variances[i] = cov[(t, t)];
        }
    }
    Ok(CvResiduals { residuals, variances })
}

/// Cross-validation fit: `ω` (and `p`) minimize the sum of squared held-out
/// errors over `k` folds; `σ̂²` is then the mean squared standardized
/// held-out residual. `k = m` is leave-one-out.
///
/// When the objective vanishes everywhere (data on the trend) the smallest
/// admissible length-scales are returned.
pub fn fit_cv(
    training: &TrainingSet,
    trend: &TrendSpec,
    kind: KernelKind,
    k: usize,
    opts: &FitOptions,
) -> Result<FittedEmulator> {
    opts.validate()?;
    check_estimable(training, trend)?;
    let folds = cv_folds(training.len(), k, opts.seed)?;
    if training.is_constant() && trend.known_mean().is_none() {
        return constant_emulator(training, trend, kind, opts);
    }
    let param = Parameterization::new(kind, training.dim(), opts);
    let sse = |kernel: &KernelSpec| -> Result<f64> {
        let prof = profile(training, trend, kernel, opts.nugget)?;
        let cv = cv_residuals(&prof.core, &folds)?;
        Ok(cv.residuals.iter().map(|e| e * e).sum())
    };
    let mut last_error = None;
    let objective = |v: &[f64]| match param.kernel(v).and_then(|kern| sse(&kern)) {
        Ok(val) => val,
        Err(e) => {
            last_error = Some(e);
            f64::INFINITY
        }
    };
    let (best, mut value) = multistart(&param, opts, objective).map_err(|e| match &last_error {
        Some(cause) => Error::FitFailed(format!("{e}; last failure: {cause}")),
        None => e,
    })?;
    let scale = training.standardized_outputs().norm_squared().max(f64::MIN_POSITIVE);
    let mut kernel = param.kernel(&best)?;
    if value <= DEGENERATE_SIGMA2 * scale {
        kernel = KernelSpec::with_roughness(kind, vec![opts.omega_bounds.0; training.dim()], kernel.p)?;
        value = 0.0;
    }
    let prof = profile(training, trend, &kernel, opts.nugget)?;
    let cv = cv_residuals(&prof.core, &folds)?;
    let m = training.len() as f64;
    let sigma2 = if value == 0.0 {
        0.0
    } else {
        cv.residuals
            .iter()
            .zip(&cv.variances)
            .map(|(e, v)| if *v > 0.0 { e * e / v } else { 0.0 })
            .sum::<f64>()
            / m
    };
    let objective = value * training.output_scaling().variance_factor();
    FittedEmulator::build(
        training.clone(),
        trend.clone(),
        kernel,
        opts.nugget,
        Some(sigma2),
        Estimation::Cv { folds: k, objective },
    )
}
