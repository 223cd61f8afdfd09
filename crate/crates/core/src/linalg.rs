//! Cholesky factor of a symmetric positive-definite matrix.

use nalgebra::{Cholesky, DMatrix, DVector};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Factor {
    l: DMatrix<f64>,
}

impl Factor {
    /// Factorizes `a`, rejecting matrices whose pivots collapse below
    /// `n·ε` relative to the corresponding diagonal entry.
    pub fn new(a: DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        let l = Cholesky::new(a)?.unpack();
        let floor = f64::EPSILON * n.max(1) as f64;
        for (i, d) in diag.iter().enumerate() {
            let pivot = l[(i, i)];
            if !pivot.is_finite() || pivot * pivot <= floor * d.abs() {
                return None;
            }
        }
        Some(Factor { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `L⁻¹ b`
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        x
    }

    /// `L⁻¹ B`
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        x
    }

    /// `A⁻¹ b`
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.solve_lower(b);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// `A⁻¹ B`
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = self.solve_lower_mat(b);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// `log|A|`, from the factor diagonal.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Explicit `A⁻¹`. Only for diagnostics that need its diagonal blocks.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_mat(&DMatrix::identity(self.dim(), self.dim()))
    }
}

/// Factorizes `a`, adding diagonal jitter `start, 10·start, …` up to `max`
/// until it succeeds. Returns the factor and the jitter used (0 when none).
pub fn factor_with_jitter(a: &DMatrix<f64>, start: f64, max: f64) -> Option<(Factor, f64)> {
    if let Some(f) = Factor::new(a.clone()) {
        return Some((f, 0.0));
    }
    let mut jitter = start;
    while jitter > 0.0 && jitter <= max * (1.0 + 1e-12) {
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += jitter;
        }
        if let Some(f) = Factor::new(b) {
            return Some((f, jitter));
        }
        jitter *= 10.0;
    }
    None
}
