//! Householder QR decomposition.

use super::householder::{apply_left, make_reflector};
use super::matrix::Matrix;
use super::NumericsError;

/// Thin QR of an `m×n` matrix with `m ≥ n`: returns `(Q, R)` with `Q` of shape
/// `m×n` having orthonormal columns and `R` upper triangular of shape `n×n`.
pub fn qr_decompose(a: &Matrix) -> Result<(Matrix, Matrix), NumericsError> {
    let (m, n) = (a.rows(), a.cols());
    if m < n || n == 0 {
        return Err(NumericsError::QrShape { rows: m, cols: n });
    }
    let mut work = a.clone();
    let mut reflectors = Vec::with_capacity(n);
    for k in 0..n {
        let col: Vec<f64> = (k..m).map(|i| work.get(i, k)).collect();
        let (r, alpha) = make_reflector(&col);
        apply_left(&mut work, &r, k, k, n);
        work.set(k, k, alpha);
        for i in k + 1..m {
            work.set(i, k, 0.0);
        }
        reflectors.push(r);
    }
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            r.set(i, j, work.get(i, j));
        }
    }
    let mut q = Matrix::zeros(m, n);
    for i in 0..n {
        q.set(i, i, 1.0);
    }
    for k in (0..n).rev() {
        apply_left(&mut q, &reflectors[k], k, 0, n);
    }
    Ok((q, r))
}
