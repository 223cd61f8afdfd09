//! Kriging emulators: Simple, Ordinary and Universal Kriging fitted by
//! maximum likelihood or cross-validation.
//!
//! Inputs are min-max scaled to the training box and outputs standardized to
//! zero mean and unit variance before any matrix work; predictions are mapped
//! back to physical units at the boundary. All solves go through the Cholesky
//! factor of the correlation matrix.

mod fit;
mod optim;
mod trend;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{cross_matrix, CorrelationMatrix, KernelSpec};
use crate::linalg::Factor;

pub use fit::{cv_folds, fit_cv, fit_mle, gls_beta, neg_log_likelihood, sigma2_hat, FitOptions, Roughness, Sigma2};
pub use trend::TrendSpec;

/// Version tag written into serialized emulators.
pub const EMULATOR_FORMAT_VERSION: u32 = 1;

/// Two-sided 95% normal quantile used for confidence bands.
pub const Z95: f64 = 1.96;

/// Computed MSEs below `-NEGATIVE_MSE_TOLERANCE · σ̂²` are a numerical failure.
pub const NEGATIVE_MSE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputScaling {
    fn from_inputs(inputs: &[Vec<f64>]) -> Self {
        let d = inputs[0].len();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for row in inputs {
            for k in 0..d {
                lower[k] = lower[k].min(row[k]);
                upper[k] = upper[k].max(row[k]);
            }
        }
        InputScaling { lower, upper }
    }

    /// Per-dimension range; a constant column keeps unit range.
    pub fn range(&self, k: usize) -> f64 {
        let r = self.upper[k] - self.lower[k];
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(k, v)| (v - self.lower[k]) / self.range(k))
            .collect()
    }

    pub fn unscale(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(k, v)| self.lower[k] + v * self.range(k))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(k, v)| *v >= self.lower[k] && *v <= self.upper[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub mean: f64,
    /// Population standard deviation; zero for constant outputs.
    pub std: f64,
}

impl OutputScaling {
    fn from_outputs(y: &[f64]) -> Self {
        let m = y.len() as f64;
        let mean = y.iter().sum::<f64>() / m;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        OutputScaling { mean, std: var.sqrt() }
    }

    fn unit(&self) -> f64 {
        if self.std > 0.0 {
            self.std
        } else {
            1.0
        }
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.mean) / self.unit()
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        self.mean + z * self.unit()
    }

    /// Factor converting standardized variances to physical ones.
    pub fn variance_factor(&self) -> f64 {
        self.unit() * self.unit()
    }
}

/// Simulator runs used to train an emulator.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    input_names: Vec<String>,
    output_name: String,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    noise_variance: Option<Vec<f64>>,
    input_scaling: InputScaling,
    output_scaling: OutputScaling,
    scaled: Vec<Vec<f64>>,
    standardized: DVector<f64>,
}

impl TrainingSet {
    /// Training set with scaling taken from the data itself.
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let input_scaling = InputScaling::from_inputs(&inputs);
        let output_scaling = OutputScaling::from_outputs(&outputs);
        Self::with_scaling(inputs, outputs, input_scaling, output_scaling)
    }

    /// Training set that reuses existing scaling metadata.
    pub fn with_scaling(
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
        input_scaling: InputScaling,
        output_scaling: OutputScaling,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        check_dim(inputs.len(), outputs.len())?;
        let d = inputs[0].len();
        if d == 0 {
            return Err(Error::invalid("training inputs need at least one column"));
        }
        check_dim(d, input_scaling.lower.len())?;
        check_dim(d, input_scaling.upper.len())?;
        for row in &inputs {
            check_dim(d, row.len())?;
        }
        if inputs.iter().flatten().chain(&outputs).any(|v| !v.is_finite()) {
            return Err(Error::invalid("training data must be finite"));
        }
        let scaled = inputs.iter().map(|x| input_scaling.scale(x)).collect();
        let standardized =
            DVector::from_iterator(outputs.len(), outputs.iter().map(|y| output_scaling.standardize(*y)));
        Ok(TrainingSet {
            input_names: (1..=d).map(|k| format!("x{k}")).collect(),
            output_name: "y".into(),
            inputs,
            outputs,
            noise_variance: None,
            input_scaling,
            output_scaling,
            scaled,
            standardized,
        })
    }

    pub fn with_names(mut self, input_names: Vec<String>, output_name: impl Into<String>) -> Result<Self> {
        check_dim(self.dim(), input_names.len())?;
        self.input_names = input_names;
        self.output_name = output_name.into();
        Ok(self)
    }

    /// Attaches per-run observation variances (physical units), applied as a
    /// per-site nugget.
    pub fn with_noise_variance(mut self, variance: Vec<f64>) -> Result<Self> {
        check_dim(self.len(), variance.len())?;
        if variance.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("noise variances must be finite and nonnegative"));
        }
        self.noise_variance = Some(variance);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn output_name(&self) -> &str {
        &self.output_name
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn scaled_inputs(&self) -> &[Vec<f64>] {
        &self.scaled
    }

    pub fn standardized_outputs(&self) -> &DVector<f64> {
        &self.standardized
    }

    pub fn input_scaling(&self) -> &InputScaling {
        &self.input_scaling
    }

    pub fn output_scaling(&self) -> &OutputScaling {
        &self.output_scaling
    }

    pub fn noise_variance(&self) -> Option<&[f64]> {
        self.noise_variance.as_deref()
    }

    /// Per-site nugget in correlation units: observation variance over the
    /// output variance used for standardization.
    pub fn site_noise(&self) -> Vec<f64> {
        match &self.noise_variance {
            Some(v) => v.iter().map(|s| s / self.output_scaling.variance_factor()).collect(),
            None => vec![0.0; self.len()],
        }
    }

    /// Whether every output equals the first (zero variance).
    pub fn is_constant(&self) -> bool {
        self.output_scaling.std == 0.0
    }

    /// Subset of rows sharing this set's scaling.
    pub fn subset(&self, rows: &[usize]) -> Result<TrainingSet> {
        let inputs = rows.iter().map(|i| self.inputs[*i].clone()).collect();
        let outputs = rows.iter().map(|i| self.outputs[*i]).collect();
        let mut t = Self::with_scaling(inputs, outputs, self.input_scaling.clone(), self.output_scaling)?
            .with_names(self.input_names.clone(), self.output_name.clone())?;
        if let Some(v) = &self.noise_variance {
            t = t.with_noise_variance(rows.iter().map(|i| v[*i]).collect())?;
        }
        Ok(t)
    }
}

/// `Ψ = {β, σ², ω, p}` plus the nugget actually used. `beta` and `sigma2`
/// are in standardized output units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub omega: Vec<f64>,
    pub p: Vec<f64>,
    pub nugget: f64,
}

/// How the correlation parameters were chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Estimation {
    Fixed,
    ConstantOutputs,
    Mle { neg_log_likelihood: f64 },
    Cv { folds: usize, objective: f64 },
}

/// Mean and MSE of the predictor at one point, in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub mse: f64,
    /// The point lies outside the training bounding box.
    pub extrapolated: bool,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.mse.sqrt()
    }

    /// `mean ∓ 1.96·√mse`
    pub fn ci95(&self) -> (f64, f64) {
        let half = Z95 * self.std_dev();
        (self.mean - half, self.mean + half)
    }
}

#[derive(Debug, Clone)]
pub struct BatchPrediction {
    pub means: Vec<f64>,
    pub mse: Vec<f64>,
    /// Posterior covariance of the predicted outputs, when requested.
    pub covariance: Option<DMatrix<f64>>,
    pub extrapolated: Vec<bool>,
}

/// Held-out prediction of one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOut {
    pub index: usize,
    pub observed: f64,
    pub mean: f64,
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct GpCore {
    pub(crate) corr: CorrelationMatrix,
    /// `L⁻¹ F`
    pub(crate) basis_w: DMatrix<f64>,
    /// Factor of `Fᵀ R⁻¹ F`; absent for Simple Kriging.
    pub(crate) gram: Option<Factor>,
    pub(crate) beta: DVector<f64>,
    /// `R⁻¹ (y − Fβ̂)`
    pub(crate) alpha: DVector<f64>,
    /// Known mean for Simple Kriging, standardized; zero otherwise.
    pub(crate) mu: f64,
}

/// A Kriging emulator ready for prediction.
#[derive(Debug, Clone)]
pub struct FittedEmulator {
    training: TrainingSet,
    trend: TrendSpec,
    kernel: KernelSpec,
    hyper: Hyperparameters,
    estimation: Estimation,
    degenerate: bool,
    core: Option<GpCore>,
}

impl FittedEmulator {
    /// Emulator with fixed correlation parameters; `β̂` and `σ̂²` are profiled
    /// from the data.
    pub fn with_hyperparameters(
        training: TrainingSet,
        trend: TrendSpec,
        kernel: KernelSpec,
        nugget: f64,
    ) -> Result<Self> {
        Self::build(training, trend, kernel, nugget, None, Estimation::Fixed)
    }

    pub(crate) fn build(
        training: TrainingSet,
        trend: TrendSpec,
        kernel: KernelSpec,
        nugget: f64,
        sigma2_override: Option<f64>,
        estimation: Estimation,
    ) -> Result<Self> {
        check_dim(training.dim(), kernel.dim())?;
        trend.validate(training.dim())?;
        if training.is_constant() && trend.known_mean().is_none() {
            // standardized outputs are identically zero
            let beta = vec![0.0; trend.n_basis(training.dim())];
            let hyper = Hyperparameters {
                beta,
                sigma2: 0.0,
                omega: kernel.omega.clone(),
                p: kernel.p.clone(),
                nugget,
            };
            return Ok(FittedEmulator {
                training,
                trend,
                kernel,
                hyper,
                estimation: Estimation::ConstantOutputs,
                degenerate: true,
                core: None,
            });
        }
        let prof = fit::profile(&training, &trend, &kernel, nugget)?;
        let sigma2 = sigma2_override.unwrap_or(prof.sigma2.value);
        let degenerate = prof.sigma2.degenerate && sigma2_override.is_none() || sigma2 == 0.0;
        let hyper = Hyperparameters {
            beta: prof.core.beta.iter().copied().collect(),
            sigma2,
            omega: kernel.omega.clone(),
            p: kernel.p.clone(),
            nugget: prof.core.corr.nugget(),
        };
        Ok(FittedEmulator {
            training,
            trend,
            kernel,
            hyper,
            estimation,
            degenerate,
            core: Some(prof.core),
        })
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn trend(&self) -> &TrendSpec {
        &self.trend
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn estimation(&self) -> &Estimation {
        &self.estimation
    }

    /// Zero process variance: either constant outputs or data lying exactly on the trend.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn dim(&self) -> usize {
        self.training.dim()
    }

    /// `σ̂²` in physical output units.
    pub fn process_variance(&self) -> f64 {
        self.hyper.sigma2 * self.training.output_scaling().variance_factor()
    }

    /// Length-scales expressed in physical input units.
    ///
    /// For the power-exponential kernel `ω` multiplies `|h|^p`, so the
    /// conversion uses `range^p`; every other kind scales linearly.
    pub fn physical_length_scales(&self) -> Vec<f64> {
        let s = self.training.input_scaling();
        (0..self.dim())
            .map(|k| match self.kernel.kind {
                crate::kernel::KernelKind::PowerExponential => self.hyper.omega[k] * s.range(k).powf(self.hyper.p[k]),
                _ => self.hyper.omega[k] * s.range(k),
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let b = self.predict_batch(&[x.to_vec()], false)?;
        Ok(Prediction {
            mean: b.means[0],
            mse: b.mse[0],
            extrapolated: b.extrapolated[0],
        })
    }

    /// Means and MSEs at many points (physical units), optionally with the
    /// full posterior covariance between them.
    pub fn predict_batch(&self, points: &[Vec<f64>], with_covariance: bool) -> Result<BatchPrediction> {
        for p in points {
            check_dim(self.dim(), p.len())?;
        }
        let scaling = self.training.input_scaling();
        let extrapolated: Vec<bool> = points.iter().map(|p| !scaling.contains(p)).collect();
        if extrapolated.iter().any(|e| *e) {
            log::debug!(
                "prediction outside the training box ({} points)",
                extrapolated.iter().filter(|e| **e).count()
            );
        }
        let out = self.training.output_scaling();
        let k = points.len();
        let Some(core) = &self.core else {
            let mean = match self.trend.known_mean() {
                Some(mu) => mu,
                None => out.mean,
            };
            return Ok(BatchPrediction {
                means: vec![mean; k],
                mse: vec![0.0; k],
                covariance: with_covariance.then(|| DMatrix::zeros(k, k)),
                extrapolated,
            });
        };
        let scaled: Vec<Vec<f64>> = points.iter().map(|p| scaling.scale(p)).collect();
        let train = self.training.scaled_inputs();
        let rx = cross_matrix(train, &scaled, &self.kernel);
        let v = core.corr.factor().solve_lower_mat(&rx);
        let fstar = self.trend.basis_matrix(&scaled);

        let mut means = Vec::with_capacity(k);
        for j in 0..k {
            let trend_part = if core.beta.is_empty() {
                core.mu
            } else {
                (fstar.row(j) * &core.beta)[0]
            };
            means.push(out.destandardize(trend_part + rx.column(j).dot(&core.alpha)));
        }

        // u_j = Fᵀ R⁻¹ r_j − f(x_j)
        let (u, g_inv_u) = match &core.gram {
            Some(g) => {
                let u = core.basis_w.transpose() * &v - fstar.transpose();
                let gu = g.solve_mat(&u);
                (u, gu)
            }
            None => (DMatrix::zeros(0, k), DMatrix::zeros(0, k)),
        };
        let sigma2 = self.hyper.sigma2;
        let var_factor = out.variance_factor() * sigma2;

        let mut mse = Vec::with_capacity(k);
        for j in 0..k {
            let raw = 1.0 - v.column(j).norm_squared() + u.column(j).dot(&g_inv_u.column(j));
            mse.push(clamp_mse(raw, sigma2)? * out.variance_factor());
        }

        let covariance = if with_covariance {
            let kss = cross_matrix(&scaled, &scaled, &self.kernel);
            let mut c = kss - v.transpose() * &v + u.transpose() * &g_inv_u;
            c = (&c + c.transpose()) * 0.5;
            c *= var_factor;
            for j in 0..k {
                c[(j, j)] = mse[j];
            }
            Some(c)
        } else {
            None
        };
        Ok(BatchPrediction {
            means,
            mse,
            covariance,
            extrapolated,
        })
    }

    /// Cross-validated predictions for the given folds with the correlation
    /// parameters held fixed and `β̂` re-estimated on the remaining runs.
    ///
    /// Uses the block identity `e_B = (Q_BB)⁻¹ (Q y)_B` with
    /// `Q = R⁻¹ − R⁻¹F (FᵀR⁻¹F)⁻¹ FᵀR⁻¹`, which equals refitting without fold `B`.
    pub fn held_out(&self, folds: &[Vec<usize>]) -> Result<Vec<HeldOut>> {
        let m = self.training.len();
        check_folds(folds, m)?;
        let y = self.training.outputs();
        let Some(core) = &self.core else {
            let mut out: Vec<HeldOut> = folds
                .iter()
                .flatten()
                .map(|&i| HeldOut {
                    index: i,
                    observed: y[i],
                    mean: y[i],
                    mse: 0.0,
                })
                .collect();
            out.sort_by_key(|h| h.index);
            return Ok(out);
        };
        let cv = fit::cv_residuals(core, folds)?;
        let noise = core.corr.noise();
        let tau2 = core.corr.nugget();
        let out_scale = self.training.output_scaling();
        let unit = out_scale.variance_factor().sqrt();
        let mut result = Vec::with_capacity(m);
        for i in 0..m {
            let latent = cv.variances[i] - tau2 - noise[i];
            let mse = clamp_mse(latent, 1.0)? * self.hyper.sigma2 * out_scale.variance_factor();
            result.push(HeldOut {
                index: i,
                observed: y[i],
                mean: y[i] - cv.residuals[i] * unit,
                mse,
            });
        }
        Ok(result)
    }

    /// Leave-one-out predictions (`K = m`).
    pub fn leave_one_out(&self) -> Result<Vec<HeldOut>> {
        let folds: Vec<Vec<usize>> = (0..self.training.len()).map(|i| vec![i]).collect();
        self.held_out(&folds)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = EmulatorDocument {
            version: EMULATOR_FORMAT_VERSION,
            trend: self.trend.clone(),
            kernel: self.kernel.clone(),
            hyperparameters: self.hyper.clone(),
            estimation: self.estimation.clone(),
            degenerate: self.degenerate,
            input_scaling: self.training.input_scaling().clone(),
            output_scaling: *self.training.output_scaling(),
            training: TrainingDocument {
                input_names: self.training.input_names().to_vec(),
                output_name: self.training.output_name().to_string(),
                inputs: self.training.inputs().to_vec(),
                outputs: self.training.outputs().to_vec(),
                noise_variance: self.training.noise_variance().map(|v| v.to_vec()),
            },
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EmulatorDocument = serde_json::from_str(text)?;
        if doc.version != EMULATOR_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported emulator format version {}",
                doc.version
            )));
        }
        let t = doc.training;
        let mut training = TrainingSet::with_scaling(t.inputs, t.outputs, doc.input_scaling, doc.output_scaling)?
            .with_names(t.input_names, t.output_name)?;
        if let Some(v) = t.noise_variance {
            training = training.with_noise_variance(v)?;
        }
        let mut em = Self::build(
            training,
            doc.trend,
            doc.kernel,
            doc.hyperparameters.nugget,
            Some(doc.hyperparameters.sigma2),
            doc.estimation,
        )?;
        em.degenerate = doc.degenerate;
        Ok(em)
    }
}

pub(crate) fn clamp_mse(raw: f64, sigma2: f64) -> Result<f64> {
    if raw >= 0.0 {
        Ok(raw * sigma2)
    } else if raw >= -NEGATIVE_MSE_TOLERANCE || sigma2 == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::NumericalBreakdown(format!(
            "negative predictive variance {:e}",
            raw * sigma2
        )))
    }
}

pub(crate) fn q_matrix(core: &GpCore) -> DMatrix<f64> {
    let rinv = core.corr.factor().inverse();
    match &core.gram {
        Some(g) => {
            // R⁻¹F = L⁻ᵀ (L⁻¹F)
            let mut w = core.basis_w.clone();
            core.corr.factor().lower().tr_solve_lower_triangular_mut(&mut w);
            let gw = g.solve_mat(&w.transpose());
            rinv - &w * gw
        }
        None => rinv,
    }
}

pub(crate) fn check_folds(folds: &[Vec<usize>], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    for fold in folds {
        if fold.is_empty() {
            return Err(Error::invalid("empty cross-validation fold"));
        }
        for &i in fold {
            if i >= m || seen[i] {
                return Err(Error::invalid("folds must partition the training runs"));
            }
            seen[i] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid("folds must cover every training run"));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TrainingDocument {
    input_names: Vec<String>,
    output_name: String,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_variance: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EmulatorDocument {
    version: u32,
    trend: TrendSpec,
    kernel: KernelSpec,
    hyperparameters: Hyperparameters,
    estimation: Estimation,
    degenerate: bool,
    input_scaling: InputScaling,
    output_scaling: OutputScaling,
    training: TrainingDocument,
}
