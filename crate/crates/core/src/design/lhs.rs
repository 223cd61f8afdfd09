use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{min_pairwise_distance, DesignMatrix, ParameterSpace};
use crate::error::{Error, Result};

/// Where each point sits inside its stratum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LhsPlacement {
    #[default]
    Random,
    Midpoint,
}

/// Latin hypercube with uniform within-stratum placement and independent
/// column permutations.
pub fn lhs_design(n: usize, space: &ParameterSpace, seed: u64) -> Result<DesignMatrix> {
    lhs_design_with(n, space, seed, LhsPlacement::Random)
}

pub fn lhs_design_with(n: usize, space: &ParameterSpace, seed: u64, placement: LhsPlacement) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(Error::invalid("latin hypercube needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = space.dim();
    let mut points = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..d {
        perm.shuffle(&mut rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let offset = match placement {
                LhsPlacement::Random => rng.random::<f64>(),
                LhsPlacement::Midpoint => 0.5,
            };
            let mut v = (stratum as f64 + offset) / n as f64;
            // rounding can push a draw near the upper edge into the next stratum
            if (v * n as f64).floor() as usize != stratum {
                v = (stratum as f64 + 0.5) / n as f64;
            }
            points[i][k] = v;
        }
    }
    DesignMatrix::new(points, space.clone())
}

/// Best of `restarts` independent LHS draws by minimum pairwise distance in
/// the unit cube. Draw `r` uses seed `seed + r`, so one restart reproduces
/// [`lhs_design`]; ties keep the earliest draw.
pub fn maximin_lhs(n: usize, space: &ParameterSpace, restarts: usize, seed: u64) -> Result<DesignMatrix> {
    if n < 2 {
        return Err(Error::invalid("maximin design needs n >= 2"));
    }
    if restarts == 0 {
        return Err(Error::invalid("maximin design needs at least one restart"));
    }
    let mut best: Option<(f64, DesignMatrix)> = None;
    for r in 0..restarts {
        let cand = lhs_design(n, space, seed.wrapping_add(r as u64))?;
        let dist = min_pairwise_distance(cand.unit_points());
        if best.as_ref().is_none_or(|(b, _)| dist > *b) {
            best = Some((dist, cand));
        }
    }
    Ok(best.expect("at least one restart").1)
}
