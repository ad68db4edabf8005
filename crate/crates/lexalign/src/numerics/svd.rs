//! Singular value decomposition via Householder bidiagonalization followed by
//! implicit-shift QR iteration with Givens rotations (Golub–Reinsch).

use super::householder::{apply_left, apply_right, make_reflector, Reflector};
use super::matrix::Matrix;
use super::NumericsError;

/// Relative threshold below which a superdiagonal or diagonal entry is
/// treated as zero during QR iteration.
const CONVERGENCE_THRESHOLD: f64 = 1e-12;
/// QR sweeps allowed per input, as a multiple of `min(rows, cols)`.
const MAX_SWEEPS_FACTOR: usize = 100;

/// Thin SVD `A = U·diag(S)·Vᵀ` with `U: m×k`, `V: n×k`, `k = min(m, n)`.
/// Singular values are nonnegative and sorted in descending order.
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

/// Givens pair `(c, s)` with `c·a + s·b = hypot(a, b)` and `-s·a + c·b = 0`.
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        return (1.0, 0.0);
    }
    let r = a.hypot(b);
    (a / r, b / r)
}

/// Column rotation: `col_a ← c·col_a + s·col_b`, `col_b ← -s·col_a + c·col_b`.
fn rotate_cols(m: &mut Matrix, a: usize, b: usize, c: f64, s: f64) {
    for i in 0..m.rows() {
        let x = m.get(i, a);
        let y = m.get(i, b);
        m.set(i, a, c * x + s * y);
        m.set(i, b, -s * x + c * y);
    }
}

/// Wilkinson shift from the trailing 2×2 block of `BᵀB` restricted to `lo..=hi`.
fn wilkinson_shift(d: &[f64], e: &[f64], lo: usize, hi: usize) -> f64 {
    let t11 = d[hi - 1] * d[hi - 1] + if hi - 1 > lo { e[hi - 2] * e[hi - 2] } else { 0.0 };
    let t12 = d[hi - 1] * e[hi - 1];
    let t22 = d[hi] * d[hi] + e[hi - 1] * e[hi - 1];
    if t12 == 0.0 {
        return t22;
    }
    let delta = (t11 - t22) / 2.0;
    let denom = delta + delta.signum() * delta.hypot(t12);
    t22 - t12 * t12 / denom
}

/// One implicit-shift QR sweep on the bidiagonal block `lo..=hi`, with the
/// rotations accumulated into the columns of `u` and `v`.
fn golub_kahan_step(d: &mut [f64], e: &mut [f64], lo: usize, hi: usize, u: &mut Matrix, v: &mut Matrix) {
    let mu = wilkinson_shift(d, e, lo, hi);
    let mut y = d[lo] * d[lo] - mu;
    let mut z = d[lo] * e[lo];
    for k in lo..hi {
        // Right rotation on columns (k, k+1): zeroes z against y and moves the
        // bulge to (k+1, k).
        let (c, s) = givens(y, z);
        if k > lo {
            e[k - 1] = c * y + s * z;
        }
        let dk = d[k];
        let ek = e[k];
        let dk1 = d[k + 1];
        d[k] = c * dk + s * ek;
        e[k] = -s * dk + c * ek;
        let bulge = s * dk1;
        d[k + 1] = c * dk1;
        rotate_cols(v, k, k + 1, c, s);

        // Left rotation on rows (k, k+1): zeroes the bulge and, except at the
        // block end, pushes a new bulge to (k, k+2).
        let (c2, s2) = givens(d[k], bulge);
        d[k] = c2 * d[k] + s2 * bulge;
        let ek_cur = e[k];
        let dk1_cur = d[k + 1];
        e[k] = c2 * ek_cur + s2 * dk1_cur;
        d[k + 1] = -s2 * ek_cur + c2 * dk1_cur;
        if k + 1 < hi {
            let ek1 = e[k + 1];
            y = e[k];
            z = s2 * ek1;
            e[k + 1] = c2 * ek1;
        }
        rotate_cols(u, k, k + 1, c2, s2);
    }
}

/// Annihilates `e[i]` when `d[i]` has underflowed to numerical zero, chasing
/// the off-row entry through rows `i+1..=hi` with left rotations.
fn chase_zero_diagonal(d: &mut [f64], e: &mut [f64], i: usize, hi: usize, u: &mut Matrix) {
    let mut f = e[i];
    e[i] = 0.0;
    for j in i + 1..=hi {
        let (c, s) = givens(d[j], f);
        d[j] = c * d[j] + s * f;
        rotate_cols(u, j, i, c, s);
        if j < hi {
            f = -s * e[j];
            e[j] = c * e[j];
        }
    }
}

fn svd_tall(a: &Matrix) -> Result<Svd, NumericsError> {
    let (m, n) = (a.rows(), a.cols());
    debug_assert!(m >= n && n > 0);

    // Phase 1: bidiagonalize A = Ub · B · Vbᵀ with Householder reflectors.
    let mut work = a.clone();
    let mut left: Vec<Reflector> = Vec::with_capacity(n);
    let mut right: Vec<Reflector> = Vec::new();
    for k in 0..n {
        let col: Vec<f64> = (k..m).map(|i| work.get(i, k)).collect();
        let (r, _) = make_reflector(&col);
        apply_left(&mut work, &r, k, k, n);
        left.push(r);
        if k + 2 < n {
            let row: Vec<f64> = (k + 1..n).map(|j| work.get(k, j)).collect();
            let (r2, _) = make_reflector(&row);
            apply_right(&mut work, &r2, k, k + 1);
            right.push(r2);
        }
    }
    let mut d: Vec<f64> = (0..n).map(|i| work.get(i, i)).collect();
    let mut e: Vec<f64> = (0..n.saturating_sub(1)).map(|i| work.get(i, i + 1)).collect();

    // Thin accumulators: U = Ub·E (m×n), V = Vb (n×n).
    let mut u = Matrix::zeros(m, n);
    for i in 0..n {
        u.set(i, i, 1.0);
    }
    for k in (0..n).rev() {
        apply_left(&mut u, &left[k], k, 0, n);
    }
    let mut v = Matrix::identity(n);
    for k in (0..right.len()).rev() {
        apply_left(&mut v, &right[k], k + 1, 0, n);
    }

    // Phase 2: implicit-shift QR on the bidiagonal form.
    let bnorm = d.iter().chain(e.iter()).fold(0.0f64, |acc, &x| acc.max(x.abs()));
    if bnorm > 0.0 {
        let max_sweeps = MAX_SWEEPS_FACTOR * n;
        let mut sweeps = 0usize;
        let mut hi = n - 1;
        'outer: while hi > 0 {
            if e[hi - 1].abs() <= CONVERGENCE_THRESHOLD * (d[hi - 1].abs() + d[hi].abs()) {
                e[hi - 1] = 0.0;
                hi -= 1;
                continue;
            }
            let mut lo = hi - 1;
            while lo > 0 && e[lo - 1].abs() > CONVERGENCE_THRESHOLD * (d[lo - 1].abs() + d[lo].abs()) {
                lo -= 1;
            }
            if lo > 0 {
                e[lo - 1] = 0.0;
            }
            for i in lo..hi {
                if d[i].abs() <= CONVERGENCE_THRESHOLD * bnorm {
                    d[i] = 0.0;
                    chase_zero_diagonal(&mut d, &mut e, i, hi, &mut u);
                    continue 'outer;
                }
            }
            if sweeps >= max_sweeps {
                return Err(NumericsError::SvdNonConvergence { sweeps });
            }
            golub_kahan_step(&mut d, &mut e, lo, hi, &mut u, &mut v);
            sweeps += 1;
        }
    }

    // Sign convention and descending sort.
    for i in 0..n {
        if d[i] < 0.0 {
            d[i] = -d[i];
            for r in 0..n {
                let cur = v.get(r, i);
                v.set(r, i, -cur);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap().then(i.cmp(&j)));
    let singular_values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut u_sorted = Matrix::zeros(m, n);
    let mut v_sorted = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..m {
            u_sorted.set(r, dst, u.get(r, src));
        }
        for r in 0..n {
            v_sorted.set(r, dst, v.get(r, src));
        }
    }
    Ok(Svd { u: u_sorted, singular_values, v: v_sorted })
}

/// Computes the thin SVD of any nonempty matrix. Inputs with more columns
/// than rows are handled by decomposing the transpose and swapping factors.
pub fn svd(a: &Matrix) -> Result<Svd, NumericsError> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Err(NumericsError::EmptyMatrix);
    }
    if m >= n {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.transpose())?;
        Ok(Svd { u: t.v, singular_values: t.singular_values, v: t.u })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_support::{
        assert_orthonormal_cols, jacobi_singular_values, random_matrix, reconstruct,
    };

    #[test]
    fn diagonal_matrix_is_its_own_svd() {
        let a = Matrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, 2.0]);
        let out = svd(&a).unwrap();
        assert!((out.singular_values[0] - 3.0).abs() <= 1e-12);
        assert!((out.singular_values[1] - 2.0).abs() <= 1e-12);
        for m in [&out.u, &out.v] {
            for i in 0..2 {
                for j in 0..2 {
                    let v = m.get(i, j).abs();
                    assert!(v.min((v - 1.0).abs()) <= 1e-12, "factors must be signed permutations");
                }
            }
        }
        assert!(reconstruct(&out).frobenius_distance(&a) <= 1e-12);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = vec![1.0, -2.0, 0.5, 3.0];
        let v = vec![2.0, 1.0, -1.0];
        let mut a = Matrix::zeros(4, 3);
        for i in 0..4 {
            for j in 0..3 {
                a.set(i, j, u[i] * v[j]);
            }
        }
        let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let out = svd(&a).unwrap();
        assert!((out.singular_values[0] - nu * nv).abs() <= 1e-10);
        for &s in &out.singular_values[1..] {
            assert!(s.abs() <= 1e-10);
        }
        assert!(reconstruct(&out).frobenius_distance(&a) <= 1e-10);
    }

    #[test]
    fn random_square_matrix_reconstructs() {
        let a = random_matrix(10, 10, 3);
        let out = svd(&a).unwrap();
        assert!(reconstruct(&out).frobenius_distance(&a) <= 1e-10 * a.frobenius_norm());
        assert_orthonormal_cols(&out.u, 1e-12);
        assert_orthonormal_cols(&out.v, 1e-12);
        for w in out.singular_values.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn wide_matrix_transposes_cleanly() {
        let a = random_matrix(4, 9, 17);
        let out = svd(&a).unwrap();
        assert_eq!(out.u.rows(), 4);
        assert_eq!(out.u.cols(), 4);
        assert_eq!(out.v.rows(), 9);
        assert_eq!(out.v.cols(), 4);
        assert!(reconstruct(&out).frobenius_distance(&a) <= 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn zero_matrix_yields_zero_spectrum() {
        let a = Matrix::zeros(3, 2);
        let out = svd(&a).unwrap();
        assert_eq!(out.singular_values, vec![0.0, 0.0]);
        assert!(reconstruct(&out).frobenius_distance(&a) <= 1e-15);
    }

    #[test]
    fn shape_classes_reconstruct_and_match_jacobi() {
        let mut case = 0u64;
        for &(m, n) in &[(1usize, 1usize), (2, 2), (3, 3), (6, 6), (8, 8), (7, 3), (24, 5), (3, 7)] {
            for rep in 0..13 {
                case += 1;
                let a = random_matrix(m, n, 9000 + case * 37 + rep);
                let out = svd(&a).unwrap();
                let scale = a.frobenius_norm().max(1.0);
                assert!(
                    reconstruct(&out).frobenius_distance(&a) <= 1e-10 * scale,
                    "reconstruction failed at {m}x{n} rep {rep}"
                );
                assert_orthonormal_cols(&out.u, 1e-10);
                assert_orthonormal_cols(&out.v, 1e-10);
                let oracle = jacobi_singular_values(&a);
                for (got, want) in out.singular_values.iter().zip(&oracle) {
                    assert!(
                        (got - want).abs() <= 1e-8 * scale,
                        "spectrum mismatch at {m}x{n} rep {rep}: {got} vs {want}"
                    );
                }
            }
        }
        assert!(case >= 100, "invariant sweep must cover at least 100 matrices");
    }

    #[test]
    fn near_degenerate_spectrum_converges() {
        // Clustered singular values are the classic slow case for QR iteration.
        let q1 = crate::numerics::random_orthogonal(6, 21);
        let q2 = crate::numerics::random_orthogonal(6, 22);
        let mut s = Matrix::zeros(6, 6);
        for (i, sv) in [1.0, 1.0 - 1e-9, 1.0 - 2e-9, 0.5, 1e-9, 0.0].iter().enumerate() {
            s.set(i, i, *sv);
        }
        let a = q1.matmul(&s).mul_bt(&q2);
        let out = svd(&a).unwrap();
        assert!(reconstruct(&out).frobenius_distance(&a) <= 1e-10);
    }
}
