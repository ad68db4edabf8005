//! Linear-algebra kernels: dense matrices, QR, SVD, orthogonal sampling,
//! the orthogonality-restoring update used during training, and
//! finite-difference gradient checking.
//!
//! Everything here is written directly against `f64` slices; no external
//! linear-algebra backend is involved, so results are reproducible bit for
//! bit on a given platform.

mod gradcheck;
mod householder;
mod matrix;
mod qr;
mod svd;

pub use gradcheck::{finite_difference_check, GradCheckReport, DEFAULT_STEP};
pub use matrix::{dot, Matrix};
pub use qr::qr_decompose;
pub use svd::{svd, Svd};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum NumericsError {
    #[error("QR requires rows >= cols >= 1, got {rows}x{cols}")]
    QrShape { rows: usize, cols: usize },
    #[error("matrix has no elements")]
    EmptyMatrix,
    #[error("SVD failed to converge after {sweeps} QR sweeps")]
    SvdNonConvergence { sweeps: usize },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Fills an `rows×cols` matrix with independent standard normal draws, row by row.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = rng.sample(StandardNormal);
    }
    m
}

/// Draws a Haar-distributed `d×d` orthogonal matrix from the given generator:
/// QR of a Gaussian matrix with the R diagonal forced positive.
pub fn random_orthogonal_from(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    assert!(d >= 1, "dimension must be at least 1");
    let g = gaussian_matrix(d, d, rng);
    let (mut q, r) = qr_decompose(&g).expect("square input always satisfies the QR shape contract");
    for j in 0..d {
        if r.get(j, j) < 0.0 {
            for i in 0..d {
                let cur = q.get(i, j);
                q.set(i, j, -cur);
            }
        }
    }
    q
}

/// Deterministic Haar-distributed orthogonal matrix for the given seed.
pub fn random_orthogonal(d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_orthogonal_from(d, &mut rng)
}

/// Frobenius distance from the orthogonal manifold: `‖W·Wᵀ - I‖_F`.
/// Returns an error if `w` is not square.
pub fn orthogonality_error(w: &Matrix) -> Result<f64, NumericsError> {
    if w.rows() != w.cols() {
        return Err(NumericsError::NotSquare { rows: w.rows(), cols: w.cols() });
    }
    let wwt = w.mul_bt(w);
    Ok(wwt.frobenius_distance(&Matrix::identity(w.rows())))
}

/// One orthogonality-restoring update: `W' = (1 + beta)·W - beta·W·Wᵀ·W`.
///
/// Orthogonal matrices are fixed points; singular values in
/// `(0, sqrt((2 + beta)/beta))` contract toward 1.
pub fn orthogonalize_step(w: &Matrix, beta: f64) -> Matrix {
    assert_eq!(w.rows(), w.cols(), "update is defined for square maps");
    assert!(beta > 0.0, "beta must be positive");
    let wwt = w.mul_bt(w);
    let mut out = w.scaled(1.0 + beta);
    out.add_scaled(&wwt.matmul(w), -beta);
    out
}
