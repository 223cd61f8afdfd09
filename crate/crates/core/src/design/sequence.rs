use super::directions::{DIRECTION_NUMBERS, MAX_SOBOL_DIM};
use super::{DesignMatrix, ParameterSpace};
use crate::error::{Error, Result};

const BITS: usize = 32;

/// Halton dimensions are limited to the first this-many primes.
pub const MAX_HALTON_DIM: usize = 1000;

/// Direction integers `v_1..v_32` (left-aligned in a `u32`) for one dimension.
fn direction_integers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = DIRECTION_NUMBERS[dim - 1];
    let s = s as usize;
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut next = v[k - s] ^ (v[k - s] >> s);
        for l in 1..s {
            if (a >> (s - 1 - l)) & 1 == 1 {
                next ^= v[k - l];
            }
        }
        v[k] = next;
    }
    v
}

/// First `n` Sobol points after the origin and `skip` further points
/// (indices `skip + 1 ..= skip + n`, Gray-code order). Supports up to
/// [`MAX_SOBOL_DIM`] dimensions and indices below `2^32`.
pub fn sobol_sequence(n: usize, space: &ParameterSpace, skip: u64) -> Result<DesignMatrix> {
    let d = space.dim();
    if d > MAX_SOBOL_DIM {
        return Err(Error::invalid(format!(
            "Sobol sequence supports at most {MAX_SOBOL_DIM} dimensions, got {d}"
        )));
    }
    let first = skip + 1;
    if first + n as u64 > 1u64 << BITS {
        return Err(Error::invalid("Sobol index exceeds 2^32"));
    }
    let dirs: Vec<[u32; BITS]> = (0..d).map(direction_integers).collect();
    let gray = first ^ (first >> 1);
    let mut state: Vec<u32> = dirs
        .iter()
        .map(|v| (0..BITS).filter(|b| (gray >> b) & 1 == 1).fold(0, |acc, b| acc ^ v[b]))
        .collect();
    let scale = 1.0 / (1u64 << BITS) as f64;
    let mut points = Vec::with_capacity(n);
    let mut index = first;
    for _ in 0..n {
        points.push(state.iter().map(|x| *x as f64 * scale).collect());
        let c = index.trailing_ones() as usize;
        if c < BITS {
            for (x, v) in state.iter_mut().zip(&dirs) {
                *x ^= v[c];
            }
        }
        index += 1;
    }
    DesignMatrix::new(points, space.clone())
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2u64;
    while out.len() < count {
        if out.iter().take_while(|p| *p * *p <= c).all(|p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton points for indices `skip + 1 ..= skip + n`; dimension `k` uses the
/// `k`-th prime as radical-inverse base.
pub fn halton_sequence(n: usize, space: &ParameterSpace, skip: u64) -> Result<DesignMatrix> {
    let d = space.dim();
    if d > MAX_HALTON_DIM {
        return Err(Error::invalid(format!(
            "Halton sequence supports at most {MAX_HALTON_DIM} dimensions, got {d}"
        )));
    }
    let bases = primes(d);
    let points = (0..n as u64)
        .map(|i| bases.iter().map(|b| radical_inverse(skip + 1 + i, *b)).collect())
        .collect();
    DesignMatrix::new(points, space.clone())
}
