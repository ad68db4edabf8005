//! Householder reflectors shared by the QR and SVD routines.

use super::matrix::Matrix;

/// One reflector `H = I - beta·v·vᵀ` acting on trailing coordinates.
pub(super) struct Reflector {
    pub(super) v: Vec<f64>,
    pub(super) beta: f64,
}

/// Builds the reflector sending `x` to `alpha·e1` and returns `(reflector, alpha)`.
///
/// Columns that are already nonnegative multiples of `e1` get the identity
/// reflector; negative multiples get an exact sign flip. Both cases keep
/// triangular input bit-exact.
pub(super) fn make_reflector(x: &[f64]) -> (Reflector, f64) {
    let tail_zero = x[1..].iter().all(|&v| v == 0.0);
    if tail_zero {
        if x[0] >= 0.0 {
            return (Reflector { v: vec![0.0; x.len()], beta: 0.0 }, x[0]);
        }
        let mut v = vec![0.0; x.len()];
        v[0] = 1.0;
        return (Reflector { v, beta: 2.0 }, -x[0]);
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vtv: f64 = v.iter().map(|u| u * u).sum();
    (Reflector { v, beta: 2.0 / vtv }, alpha)
}

/// Applies `H` to rows `row_lo..` of `m`, columns `col_lo..col_hi`.
pub(super) fn apply_left(m: &mut Matrix, r: &Reflector, row_lo: usize, col_lo: usize, col_hi: usize) {
    if r.beta == 0.0 {
        return;
    }
    for j in col_lo..col_hi {
        let mut s = 0.0;
        for (i, &vi) in r.v.iter().enumerate() {
            s += vi * m.get(row_lo + i, j);
        }
        s *= r.beta;
        for (i, &vi) in r.v.iter().enumerate() {
            let cur = m.get(row_lo + i, j);
            m.set(row_lo + i, j, cur - s * vi);
        }
    }
}

/// Applies `H` from the right to columns `col_lo..` of `m`, rows `row_lo..`.
pub(super) fn apply_right(m: &mut Matrix, r: &Reflector, row_lo: usize, col_lo: usize) {
    if r.beta == 0.0 {
        return;
    }
    for i in row_lo..m.rows() {
        let mut s = 0.0;
        for (j, &vj) in r.v.iter().enumerate() {
            s += vj * m.get(i, col_lo + j);
        }
        s *= r.beta;
        for (j, &vj) in r.v.iter().enumerate() {
            let cur = m.get(i, col_lo + j);
            m.set(i, col_lo + j, cur - s * vj);
        }
    }
}
