use super::DesignMatrix;
use crate::emulator::FittedEmulator;
use crate::error::{Error, Result};

/// Picks the `k` candidates with the largest predictive MSE, in descending
/// order (ties keep candidate order). Candidates are ranked once; the
/// emulator is not updated between picks.
pub fn adaptive_enrich(emulator: &FittedEmulator, candidates: &DesignMatrix, k: usize) -> Result<DesignMatrix> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate points"));
    }
    if k == 0 || k > candidates.len() {
        return Err(Error::invalid(format!(
            "k must lie in 1..={}, got {k}",
            candidates.len()
        )));
    }
    let mse = emulator.predict_batch(&candidates.physical_points(), false)?.mse;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|a, b| mse[*b].total_cmp(&mse[*a]));
    let picked = order[..k]
        .iter()
        .map(|i| candidates.unit_points()[*i].clone())
        .collect();
    DesignMatrix::new(picked, candidates.space().clone())
}
