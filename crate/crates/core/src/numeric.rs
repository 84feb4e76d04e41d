//! Small numerical helpers shared across modules.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Neumaier-compensated sum, evaluated in iteration order.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn compensated_mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Lower Cholesky factor. On failure reports the order and value of the
/// first non-positive leading principal minor.
pub(crate) fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Shape(format!("expected a square matrix, got {}x{}", n, m.ncols())));
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut log_det = 0.0_f64;
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for p in 0..j {
            pivot -= l[(j, p)] * l[(j, p)];
        }
        let scale = m[(j, j)].abs().max(f64::MIN_POSITIVE);
        if !(pivot > 1e-14 * scale) {
            // det(leading minor j+1) = prod_{i<j} L_ii^2 * pivot
            let value = log_det.exp() * pivot;
            return Err(Error::NotPositiveDefinite { order: j + 1, value });
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        log_det += pivot.ln();
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(l)
}

/// `ln det` of a symmetric positive definite matrix.
pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let l = cholesky_lower(m)?;
    Ok(2.0 * compensated_sum((0..l.nrows()).map(|i| l[(i, i)].ln())))
}

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// SplitMix64 finalizer; used to derive independent stream seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a counter position, independent of evaluation order.
pub(crate) fn derive_seed(base: u64, counters: &[u64]) -> u64 {
    counters.iter().fold(mix64(base), |acc, &c| mix64(acc ^ mix64(c)))
}

/// FNV-1a, for stable string-derived stream identifiers.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
