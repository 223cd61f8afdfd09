#![allow(dead_code)]

use emucal::emulator::{FittedEmulator, TrainingSet, TrendSpec};
use emucal::kernel::{KernelKind, KernelSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kriging predictor written with explicit inverses and the partitioned
/// (bordered) system, independent of the library's whitened solves.
pub struct Oracle {
    pub x: Vec<Vec<f64>>,
    pub y: DVector<f64>,
    pub f: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub rinv: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub mu: Option<f64>,
    pub spec: KernelSpec,
    pub trend: TrendSpec,
    pub em: FittedEmulator,
}

impl Oracle {
    pub fn new(em: &FittedEmulator) -> Oracle {
        let t = em.training();
        let x = t.scaled_inputs().to_vec();
        let m = x.len();
        let spec = em.kernel().clone();
        let nugget = em.hyperparameters().nugget;
        let noise: Vec<f64> = match t.noise_variance() {
            Some(v) => v.iter().map(|s| s / t.output_scaling().variance_factor()).collect(),
            None => vec![0.0; m],
        };
        let mut r = DMatrix::from_fn(m, m, |i, j| spec.eval(&x[i], &x[j]));
        for i in 0..m {
            r[(i, i)] = 1.0 + nugget + noise[i];
        }
        let rinv = r.clone().try_inverse().unwrap();
        let trend = em.trend().clone();
        let f = trend.basis_matrix(&x);
        let mu = trend.known_mean();
        let y = DVector::from_column_slice(t.outputs());
        let yc = y.add_scalar(-mu.unwrap_or(0.0));
        let beta = if f.ncols() == 0 {
            DVector::zeros(0)
        } else {
            let g = f.transpose() * &rinv * &f;
            g.try_inverse().unwrap() * f.transpose() * &rinv * &yc
        };
        let res = &yc - &f * &beta;
        let sigma2 = (res.transpose() * &rinv * &res)[0] / m as f64;
        Oracle {
            x,
            y,
            f,
            r,
            rinv,
            beta,
            sigma2,
            mu,
            spec,
            trend,
            em: em.clone(),
        }
    }

    fn scaled(&self, p: &[f64]) -> Vec<f64> {
        self.em.training().input_scaling().scale(p)
    }

    fn rvec(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| self.spec.eval(xi, u)))
    }

    pub fn mean(&self, p: &[f64]) -> f64 {
        let u = self.scaled(p);
        let r = self.rvec(&u);
        let mu = self.mu.unwrap_or(0.0);
        let fx = DVector::from_vec(self.trend.basis(&u));
        let trend = mu + if fx.is_empty() { 0.0 } else { fx.dot(&self.beta) };
        let res = self.y.add_scalar(-mu) - &self.f * &self.beta;
        trend + (r.transpose() * &self.rinv * res)[0]
    }

    /// Expanded covariance `σ²[k(a,b) − r_aᵀR⁻¹r_b + u_aᵀ(FᵀR⁻¹F)⁻¹u_b]`
    /// with `u = FᵀR⁻¹r − f`.
    pub fn cov(&self, a: &[f64], b: &[f64]) -> f64 {
        let ua = self.scaled(a);
        let ub = self.scaled(b);
        let (ra, rb) = (self.rvec(&ua), self.rvec(&ub));
        let mut c = self.spec.eval(&ua, &ub) - (ra.transpose() * &self.rinv * &rb)[0];
        if self.f.ncols() > 0 {
            let g = (self.f.transpose() * &self.rinv * &self.f).try_inverse().unwrap();
            let u = |r: &DVector<f64>, x: &[f64]| {
                self.f.transpose() * &self.rinv * r - DVector::from_vec(self.trend.basis(x))
            };
            c += (u(&ra, &ua).transpose() * g * u(&rb, &ub))[0];
        }
        self.sigma2 * c
    }

    /// Bordered-system covariance `σ²[k(a,b) − [f_a; r_a]ᵀ M⁻¹ [f_b; r_b]]`.
    pub fn cov_bordered(&self, a: &[f64], b: &[f64]) -> f64 {
        let ua = self.scaled(a);
        let ub = self.scaled(b);
        let n = self.f.ncols();
        let m = self.x.len();
        let mut big = DMatrix::zeros(n + m, n + m);
        big.view_mut((0, n), (n, m)).copy_from(&self.f.transpose());
        big.view_mut((n, 0), (m, n)).copy_from(&self.f);
        big.view_mut((n, n), (m, m)).copy_from(&self.r);
        let inv = big.try_inverse().unwrap();
        let stack = |u: &[f64]| {
            let mut v = self.trend.basis(u);
            v.extend(self.rvec(u).iter());
            DVector::from_vec(v)
        };
        let (sa, sb) = (stack(&ua), stack(&ub));
        self.sigma2 * (self.spec.eval(&ua, &ub) - (sa.transpose() * inv * sb)[0])
    }

    pub fn mse(&self, p: &[f64]) -> f64 {
        self.cov(p, p)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Draws `y ~ N(0, σ² R)` at `points` for a kernel given in the same units.
pub fn gp_draw(rng: &mut ChaCha8Rng, points: &[Vec<f64>], spec: &KernelSpec, sigma2: f64) -> Vec<f64> {
    let m = points.len();
    let mut k = DMatrix::from_fn(m, m, |i, j| sigma2 * spec.eval(&points[i], &points[j]));
    for i in 0..m {
        k[(i, i)] += 1e-8 * sigma2;
    }
    let l = k.cholesky().expect("covariance should factor").l();
    let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
    (l * z).iter().copied().collect()
}

pub fn demo_function(x: f64) -> f64 {
    x * x.sin()
}

pub fn equispaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn training_1d(xs: &[f64], f: impl Fn(f64) -> f64) -> TrainingSet {
    TrainingSet::new(
        xs.iter().map(|x| vec![*x]).collect(),
        xs.iter().map(|x| f(*x)).collect(),
    )
    .unwrap()
}

pub fn kernel(kind: KernelKind, omega: &[f64]) -> KernelSpec {
    KernelSpec::new(kind, omega.to_vec()).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs().max(a.abs()))
}
