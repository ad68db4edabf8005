//! Two-hidden-layer MLP discriminators with hand-rolled backpropagation.
//!
//! The network is `d → hidden → hidden → 1`: two leaky-ReLU layers and a
//! sigmoid output. Probabilities are clamped to `[ε, 1−ε]` before any
//! logarithm; loss code must zero the logit gradient of clamped samples so
//! analytic gradients stay the true derivatives of the computed loss.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::AdversarialError;
use crate::numerics::{dot, Matrix};

/// Probability floor/ceiling applied to sigmoid outputs before logs.
pub const PROB_EPSILON: f64 = 1e-7;

/// Parameters of one discriminator.
#[derive(Clone, Debug)]
pub struct DiscriminatorParams {
    /// First layer, `hidden × d`.
    w1: Matrix,
    b1: Vec<f64>,
    /// Second layer, `hidden × hidden`.
    w2: Matrix,
    b2: Vec<f64>,
    /// Output layer, `hidden` weights plus one bias.
    w3: Vec<f64>,
    b3: f64,
    leaky_slope: f64,
}

/// Everything the backward pass needs from a forward pass.
pub struct Activations {
    z1: Matrix,
    a1: Matrix,
    z2: Matrix,
    a2: Matrix,
    logits: Vec<f64>,
    probs: Vec<f64>,
    clamped: Vec<bool>,
}

impl Activations {
    /// Clamped per-row probabilities in `[ε, 1−ε]`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// True on rows whose raw sigmoid output fell outside the clamp range.
    pub fn clamped_flags(&self) -> &[bool] {
        &self.clamped
    }

    /// Distance of the closest hidden pre-activation to its kink at zero.
    /// Gradient checks need this margin to exceed the probe step, otherwise
    /// a finite difference straddles two linear pieces.
    pub fn preactivation_margin(&self) -> f64 {
        self.z1
            .as_slice()
            .iter()
            .chain(self.z2.as_slice())
            .fold(f64::INFINITY, |m, &z| m.min(z.abs()))
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

/// Parameter-shaped gradient block for one discriminator.
pub struct DiscriminatorGrads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: f64,
}

fn leaky(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

fn leaky_grad(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        slope
    }
}

fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Adds `bias` to every row of `m` in place.
fn add_row_bias(m: &mut Matrix, bias: &[f64]) {
    for i in 0..m.rows() {
        for (v, b) in m.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Applies the activation elementwise, keeping the pre-activation copy.
fn activate(z: &Matrix, slope: f64) -> Matrix {
    let mut a = z.clone();
    for v in a.as_mut_slice() {
        *v = leaky(*v, slope);
    }
    a
}

impl DiscriminatorParams {
    /// Uniform Glorot initialization; biases start at zero. Weights are drawn
    /// in layer order (w1, w2, w3), row-major within a layer.
    pub fn new(input_dim: usize, hidden_dim: usize, leaky_slope: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(input_dim >= 1 && hidden_dim >= 1, "layer widths must be positive");
        let mut uniform_matrix = |rows: usize, cols: usize, fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut m = Matrix::zeros(rows, cols);
            for v in m.as_mut_slice() {
                *v = rng.random_range(-a..a);
            }
            m
        };
        let w1 = uniform_matrix(hidden_dim, input_dim, input_dim, hidden_dim);
        let w2 = uniform_matrix(hidden_dim, hidden_dim, hidden_dim, hidden_dim);
        let a3 = (6.0 / (hidden_dim + 1) as f64).sqrt();
        let w3 = (0..hidden_dim).map(|_| rng.random_range(-a3..a3)).collect();
        DiscriminatorParams {
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; hidden_dim],
            w3,
            b3: 0.0,
            leaky_slope,
        }
    }

    /// All-zero parameters; the forward pass then outputs exactly 0.5.
    pub fn zeros(input_dim: usize, hidden_dim: usize, leaky_slope: f64) -> Self {
        DiscriminatorParams {
            w1: Matrix::zeros(hidden_dim, input_dim),
            b1: vec![0.0; hidden_dim],
            w2: Matrix::zeros(hidden_dim, hidden_dim),
            b2: vec![0.0; hidden_dim],
            w3: vec![0.0; hidden_dim],
            b3: 0.0,
            leaky_slope,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    /// Forward pass over a batch (one vector per row).
    pub fn forward(&self, x: &Matrix) -> Result<Activations, AdversarialError> {
        if x.rows() == 0 {
            return Err(AdversarialError::EmptyBatch);
        }
        if x.cols() != self.input_dim() {
            return Err(AdversarialError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        let mut z1 = x.mul_bt(&self.w1);
        add_row_bias(&mut z1, &self.b1);
        let a1 = activate(&z1, self.leaky_slope);
        let mut z2 = a1.mul_bt(&self.w2);
        add_row_bias(&mut z2, &self.b2);
        let a2 = activate(&z2, self.leaky_slope);
        let mut logits = Vec::with_capacity(x.rows());
        let mut probs = Vec::with_capacity(x.rows());
        let mut clamped = Vec::with_capacity(x.rows());
        for i in 0..a2.rows() {
            let l = dot(a2.row(i), &self.w3) + self.b3;
            let p = sigmoid(l);
            let clipped = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
            logits.push(l);
            clamped.push(p != clipped || !p.is_finite());
            probs.push(clipped);
        }
        Ok(Activations { z1, a1, z2, a2, logits, probs, clamped })
    }

    /// Backpropagates per-row logit gradients. Returns the parameter
    /// gradients and the gradient with respect to the input batch.
    pub fn backward(&self, x: &Matrix, acts: &Activations, dlogits: &[f64]) -> (DiscriminatorGrads, Matrix) {
        let batch = x.rows();
        assert_eq!(dlogits.len(), batch, "one logit gradient per batch row");
        let h = self.hidden_dim();

        let mut dw3 = vec![0.0; h];
        let mut db3 = 0.0;
        let mut dz2 = Matrix::zeros(batch, h);
        for i in 0..batch {
            let g = dlogits[i];
            db3 += g;
            let a2row = acts.a2.row(i);
            let z2row = acts.z2.row(i);
            let drow = dz2.row_mut(i);
            for j in 0..h {
                dw3[j] += g * a2row[j];
                drow[j] = g * self.w3[j] * leaky_grad(z2row[j], self.leaky_slope);
            }
        }
        let dw2 = dz2.mul_at_b(&acts.a1);
        let mut db2 = vec![0.0; h];
        for i in 0..batch {
            for (acc, v) in db2.iter_mut().zip(dz2.row(i)) {
                *acc += v;
            }
        }
        let mut dz1 = dz2.matmul(&self.w2);
        for i in 0..batch {
            let zrow = acts.z1.row(i);
            for (v, &z) in dz1.row_mut(i).iter_mut().zip(zrow) {
                *v *= leaky_grad(z, self.leaky_slope);
            }
        }
        let dw1 = dz1.mul_at_b(x);
        let mut db1 = vec![0.0; h];
        for i in 0..batch {
            for (acc, v) in db1.iter_mut().zip(dz1.row(i)) {
                *acc += v;
            }
        }
        let dx = dz1.matmul(&self.w1);
        (DiscriminatorGrads { w1: dw1, b1: db1, w2: dw2, b2: db2, w3: dw3, b3: db3 }, dx)
    }

    /// Plain SGD: every parameter moves by `−lr · gradient`.
    pub fn sgd_step(&mut self, grads: &DiscriminatorGrads, lr: f64) {
        self.w1.add_scaled(&grads.w1, -lr);
        self.w2.add_scaled(&grads.w2, -lr);
        for (p, g) in self.b1.iter_mut().zip(&grads.b1) {
            *p -= lr * g;
        }
        for (p, g) in self.b2.iter_mut().zip(&grads.b2) {
            *p -= lr * g;
        }
        for (p, g) in self.w3.iter_mut().zip(&grads.w3) {
            *p -= lr * g;
        }
        self.b3 -= lr * grads.b3;
    }

    /// All parameters as one flat vector: w1, b1, w2, b2, w3, b3.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
        out.extend_from_slice(&self.w3);
        out.push(self.b3);
        out
    }

    /// Rebuilds a discriminator of this shape from a flat parameter vector.
    pub fn with_parameters(&self, flat: &[f64]) -> DiscriminatorParams {
        assert_eq!(flat.len(), self.parameter_count(), "flat vector must match shape");
        let h = self.hidden_dim();
        let d = self.input_dim();
        let mut at = 0usize;
        let mut take = |n: usize| {
            let s = &flat[at..at + n];
            at += n;
            s.to_vec()
        };
        let w1 = Matrix::from_vec(h, d, take(h * d));
        let b1 = take(h);
        let w2 = Matrix::from_vec(h, h, take(h * h));
        let b2 = take(h);
        let w3 = take(h);
        let b3 = take(1)[0];
        DiscriminatorParams { w1, b1, w2, b2, w3, b3, leaky_slope: self.leaky_slope }
    }

    pub fn parameter_count(&self) -> usize {
        let h = self.hidden_dim();
        let d = self.input_dim();
        h * d + h + h * h + h + h + 1
    }
}

impl DiscriminatorGrads {
    /// Same flat layout as [`DiscriminatorParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
        out.extend_from_slice(&self.w3);
        out.push(self.b3);
        out
    }
}
