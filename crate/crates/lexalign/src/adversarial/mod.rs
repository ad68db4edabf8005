//! Two-way adversarial training of the forward and inverse maps.
//!
//! Each training iteration samples one source batch and one target batch and
//! reuses them for every step of the iteration:
//!
//! 1. `disc_steps` updates of D₁ on (W·s as fake, t as real);
//! 2. `disc_steps` updates of D₂ on (Z·W·s as fake, s as real);
//! 3. W update against D₁;
//! 4. W update against D₂ through the frozen Z;
//! 5. Z update against D₂, treating the W-images as constants;
//! 6. one orthogonality-restoring step on W and on Z.
//!
//! All five parameter groups move by plain SGD at the current learning rate,
//! which decays by a fixed factor after every epoch. After each epoch the
//! mean-similarity criterion is evaluated and the best-scoring maps are
//! snapshotted; training returns the best snapshot, not the final state.

mod checkpoint;
mod discriminator;
mod losses;

pub use checkpoint::{read_checkpoint, write_checkpoint, write_history_csv, CheckpointError};
pub use discriminator::{Activations, DiscriminatorGrads, DiscriminatorParams, PROB_EPSILON};
pub use losses::{disc_loss_and_grad, map_adv_loss_and_grad};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embeddings::EmbeddingSpace;
use crate::numerics::{orthogonality_error, orthogonalize_step, random_orthogonal_from, svd, Matrix};
use crate::seeding::{substream_rng, STREAM_INIT, STREAM_SAMPLING};
use crate::similarity::{
    build_neighborhood_cache, csls_topk_rows, knn_inner_product, SimilarityError, SimilarityMetric,
};

#[derive(Error, Debug)]
pub enum AdversarialError {
    #[error("batch width {got} does not match expected dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch must contain at least one row")]
    EmptyBatch,
    #[error("map chain must contain at least one map")]
    EmptyChain,
    #[error("invalid config: {what}")]
    InvalidConfig { what: &'static str },
    #[error("non-finite loss in {stage} at training step {step}; aborting")]
    NonFiniteLoss { stage: &'static str, step: usize },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

/// How `train` seeds the forward and inverse maps before the first iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitStrategy {
    /// Independent random rotations (the default).
    RandomOrthogonal,
    /// Closed-form unsupervised estimate from vocabulary statistics: pair the
    /// two covariance eigenbases by eigenvalue order and pick each axis sign
    /// by matching projection skews (see [`moment_aligned_init`]). The
    /// inverse map starts as the transpose. `fit_limit` caps how many of the
    /// most frequent rows enter the moment fit.
    MomentAligned { fit_limit: usize },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::RandomOrthogonal
    }
}

/// Training hyperparameters. Construct via `Default` and override fields.
#[derive(Clone, Debug)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Discriminator updates per iteration (each of D₁ and D₂).
    pub disc_steps: usize,
    pub lr0: f64,
    pub lr_decay_per_epoch: f64,
    /// Coefficient of the orthogonality-restoring step; 0 disables it.
    pub beta: f64,
    /// Batches are sampled from the first `sample_vocab_limit` rows only.
    pub sample_vocab_limit: usize,
    /// Number of most-frequent source words scored by the epoch criterion.
    pub criterion_k: usize,
    pub criterion_metric: SimilarityMetric,
    pub leaky_slope: f64,
    pub hidden_dim: usize,
    /// When set, W confronts D₁ on even iterations and D₂ on odd ones
    /// instead of both every iteration.
    pub alternate_w_updates: bool,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            batch_size: 32,
            epochs: 5,
            steps_per_epoch: 1000,
            disc_steps: 1,
            lr0: 0.1,
            lr_decay_per_epoch: 0.95,
            beta: 0.01,
            sample_vocab_limit: usize::MAX,
            criterion_k: 10_000,
            criterion_metric: SimilarityMetric::default(),
            leaky_slope: 0.2,
            hidden_dim: 2048,
            alternate_w_updates: false,
            init: InitStrategy::RandomOrthogonal,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), AdversarialError> {
        let fail = |what| Err(AdversarialError::InvalidConfig { what });
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.steps_per_epoch == 0 {
            return fail("steps_per_epoch must be at least 1");
        }
        if self.disc_steps == 0 {
            return fail("disc_steps must be at least 1");
        }
        if self.hidden_dim == 0 {
            return fail("hidden_dim must be at least 1");
        }
        if self.criterion_k == 0 {
            return fail("criterion_k must be at least 1");
        }
        if self.sample_vocab_limit == 0 {
            return fail("sample_vocab_limit must be at least 1");
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return fail("lr0 must be positive and finite");
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return fail("lr_decay_per_epoch must lie in (0, 1]");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return fail("beta must be nonnegative and finite");
        }
        if !(self.leaky_slope >= 0.0) || !self.leaky_slope.is_finite() {
            return fail("leaky_slope must be nonnegative and finite");
        }
        if let InitStrategy::MomentAligned { fit_limit } = self.init {
            if fit_limit == 0 {
                return fail("init fit_limit must be at least 1");
            }
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub criterion: f64,
    pub d1_loss: f64,
    pub d2_loss: f64,
    pub w_loss: f64,
    pub z_loss: f64,
}

/// Mutable training state: both maps, both discriminators, schedule position,
/// history, and the best snapshot seen so far.
pub struct TrainingState {
    pub w: Matrix,
    pub z: Matrix,
    pub d1: DiscriminatorParams,
    pub d2: DiscriminatorParams,
    pub epoch: usize,
    pub current_lr: f64,
    pub history: Vec<EpochRecord>,
    pub best_criterion: f64,
    pub best_w: Matrix,
    pub best_z: Matrix,
}

impl TrainingState {
    /// Draws all parameters from the init substream of `config.seed`, in the
    /// order W, Z, D₁, D₂. Both maps start exactly orthogonal.
    pub fn initialize(config: &TrainerConfig, dim: usize) -> TrainingState {
        let mut rng = substream_rng(config.seed, STREAM_INIT);
        let w = random_orthogonal_from(dim, &mut rng);
        let z = random_orthogonal_from(dim, &mut rng);
        let d1 = DiscriminatorParams::new(dim, config.hidden_dim, config.leaky_slope, &mut rng);
        let d2 = DiscriminatorParams::new(dim, config.hidden_dim, config.leaky_slope, &mut rng);
        TrainingState {
            best_w: w.clone(),
            best_z: z.clone(),
            w,
            z,
            d1,
            d2,
            epoch: 0,
            current_lr: config.lr0,
            history: Vec::new(),
            best_criterion: f64::NEG_INFINITY,
        }
    }
}

/// Per-iteration diagnostics. Losses are means over the updates performed in
/// that iteration; the orthogonality errors bracket step 6.
#[derive(Clone, Debug)]
pub struct IterationStats {
    pub d1_loss: f64,
    pub d2_loss: f64,
    pub w_loss: f64,
    pub z_loss: f64,
    pub orth_w_before: f64,
    pub orth_w_after: f64,
    pub orth_z_before: f64,
    pub orth_z_after: f64,
}

fn ensure_finite(loss: f64, stage: &'static str, step: usize) -> Result<(), AdversarialError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(AdversarialError::NonFiniteLoss { stage, step })
    }
}

/// Runs one full training iteration (the six-step sequence above) in place.
/// `step` is the global iteration index; it selects which map update runs
/// when `alternate_w_updates` is set. Batch rows are drawn uniformly with
/// replacement, source indices first, then target indices.
pub fn train_iteration(
    state: &mut TrainingState,
    config: &TrainerConfig,
    source_vectors: &Matrix,
    target_vectors: &Matrix,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<IterationStats, AdversarialError> {
    let lr = state.current_lr;
    let s_limit = config.sample_vocab_limit.min(source_vectors.rows());
    let t_limit = config.sample_vocab_limit.min(target_vectors.rows());
    let s_idx: Vec<usize> = (0..config.batch_size).map(|_| rng.random_range(0..s_limit)).collect();
    let t_idx: Vec<usize> = (0..config.batch_size).map(|_| rng.random_range(0..t_limit)).collect();
    let s_batch = source_vectors.gather_rows(&s_idx);
    let t_batch = target_vectors.gather_rows(&t_idx);

    // 1: D₁ learns to separate W-images from target rows.
    let mapped_s = s_batch.mul_bt(&state.w);
    let mut d1_sum = 0.0;
    for _ in 0..config.disc_steps {
        let (loss, grads) = disc_loss_and_grad(&state.d1, &mapped_s, &t_batch)?;
        ensure_finite(loss, "discriminator-1 update", step)?;
        state.d1.sgd_step(&grads, lr);
        d1_sum += loss;
    }

    // 2: D₂ learns to separate round-trip images from source rows.
    let round_trip = mapped_s.mul_bt(&state.z);
    let mut d2_sum = 0.0;
    for _ in 0..config.disc_steps {
        let (loss, grads) = disc_loss_and_grad(&state.d2, &round_trip, &s_batch)?;
        ensure_finite(loss, "discriminator-2 update", step)?;
        state.d2.sgd_step(&grads, lr);
        d2_sum += loss;
    }

    // 3 and 4: W confronts D₁ directly and D₂ through the frozen Z.
    let update_vs_d1 = !config.alternate_w_updates || step % 2 == 0;
    let update_vs_d2 = !config.alternate_w_updates || step % 2 == 1;
    let mut w_sum = 0.0;
    let mut w_updates = 0usize;
    if update_vs_d1 {
        let (loss, grad) = map_adv_loss_and_grad(&[&state.w], &state.d1, &s_batch, &t_batch)?;
        ensure_finite(loss, "forward-map update vs discriminator-1", step)?;
        state.w.add_scaled(&grad, -lr);
        w_sum += loss;
        w_updates += 1;
    }
    if update_vs_d2 {
        let (loss, grad) = map_adv_loss_and_grad(&[&state.w, &state.z], &state.d2, &s_batch, &s_batch)?;
        ensure_finite(loss, "forward-map update vs discriminator-2", step)?;
        state.w.add_scaled(&grad, -lr);
        w_sum += loss;
        w_updates += 1;
    }

    // 5: Z confronts D₂ on the current W-images, which stay constant here.
    let w_images = s_batch.mul_bt(&state.w);
    let (z_loss, grad_z) = map_adv_loss_and_grad(&[&state.z], &state.d2, &w_images, &s_batch)?;
    ensure_finite(z_loss, "inverse-map update", step)?;
    state.z.add_scaled(&grad_z, -lr);

    // 6: pull both maps back toward the orthogonal manifold.
    let orth_w_before = orthogonality_error(&state.w).expect("W stays square");
    let orth_z_before = orthogonality_error(&state.z).expect("Z stays square");
    if config.beta > 0.0 {
        state.w = orthogonalize_step(&state.w, config.beta);
        state.z = orthogonalize_step(&state.z, config.beta);
    }
    let orth_w_after = orthogonality_error(&state.w).expect("W stays square");
    let orth_z_after = orthogonality_error(&state.z).expect("Z stays square");

    Ok(IterationStats {
        d1_loss: d1_sum / config.disc_steps as f64,
        d2_loss: d2_sum / config.disc_steps as f64,
        w_loss: if w_updates > 0 { w_sum / w_updates as f64 } else { 0.0 },
        z_loss,
        orth_w_before,
        orth_w_after,
        orth_z_before,
        orth_z_after,
    })
}

/// Mean similarity between the `k` most frequent source words (mapped) and
/// their best candidate in the full target vocabulary. `k` and, for CSLS, the
/// neighborhood size are clamped to the available vocabularies.
pub fn mean_similarity_criterion(
    map: &Matrix,
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    k: usize,
    metric: &SimilarityMetric,
) -> Result<f64, SimilarityError> {
    if k == 0 {
        return Err(SimilarityError::ZeroK);
    }
    let k_eff = k.min(source.len());
    let rows: Vec<usize> = (0..k_eff).collect();
    let mapped = source.vectors().gather_rows(&rows).mul_bt(map);
    let top = match metric {
        SimilarityMetric::InnerProduct => knn_inner_product(&mapped, target.vectors(), 1)?,
        SimilarityMetric::Csls { neighborhood } => {
            let t_eff = (*neighborhood).min(k_eff).min(target.len()).max(1);
            let cache = build_neighborhood_cache(&mapped, target.vectors(), t_eff)?;
            csls_topk_rows(&mapped, &rows, target.vectors(), &cache, 1)?
        }
    };
    Ok(top.iter().map(|row| row[0].1).sum::<f64>() / k_eff as f64)
}

/// Trains both maps and both discriminators for `config.epochs` epochs and
/// returns the full state: best maps by criterion, final maps, and history.
/// Closed-form unsupervised map estimate from vocabulary statistics alone.
///
/// The two spaces' covariance eigenbases are paired in eigenvalue order, and
/// each paired axis takes the sign under which the third moments of the
/// projections agree. Rotating a sample preserves both statistics, so on data
/// related by a rotation plus modest noise the estimate lands near that
/// rotation without any correspondence information — the fit never looks at
/// row order. `fit_limit` caps how many of the most frequent rows enter the
/// fit; pass `usize::MAX` to use every row.
pub fn moment_aligned_init(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    fit_limit: usize,
) -> Result<Matrix, AdversarialError> {
    if source.dim() != target.dim() {
        return Err(AdversarialError::DimensionMismatch {
            expected: source.dim(),
            got: target.dim(),
        });
    }
    if source.len() == 0 || target.len() == 0 || fit_limit == 0 {
        return Err(AdversarialError::EmptyBatch);
    }
    let basis = |space: &EmbeddingSpace| -> Result<(Matrix, Vec<f64>), AdversarialError> {
        let rows: Vec<usize> = (0..fit_limit.min(space.len())).collect();
        let sample = space.vectors().gather_rows(&rows);
        let cov = sample.mul_at_b(&sample);
        let eig = svd(&cov)?;
        let proj = sample.mul_bt(&eig.u.transpose());
        let skews = (0..proj.cols())
            .map(|k| (0..proj.rows()).map(|i| proj.get(i, k).powi(3)).sum::<f64>())
            .collect();
        Ok((eig.u, skews))
    };
    let (u_s, skew_s) = basis(source)?;
    let (mut u_t, skew_t) = basis(target)?;
    for k in 0..u_t.cols() {
        if skew_s[k] * skew_t[k] < 0.0 {
            for r in 0..u_t.rows() {
                u_t.set(r, k, -u_t.get(r, k));
            }
        }
    }
    Ok(u_t.mul_bt(&u_s))
}

pub fn train(
    config: &TrainerConfig,
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
) -> Result<TrainingState, AdversarialError> {
    config.validate()?;
    if source.dim() != target.dim() {
        return Err(AdversarialError::DimensionMismatch { expected: source.dim(), got: target.dim() });
    }
    let mut state = TrainingState::initialize(config, source.dim());
    if let InitStrategy::MomentAligned { fit_limit } = config.init {
        let w0 = moment_aligned_init(source, target, fit_limit)?;
        state.z = w0.transpose();
        state.best_z = state.z.clone();
        state.w = w0;
        state.best_w = state.w.clone();
    }
    let mut rng = substream_rng(config.seed, STREAM_SAMPLING);
    for epoch in 0..config.epochs {
        let mut sums = [0.0f64; 4];
        for it in 0..config.steps_per_epoch {
            let step = epoch * config.steps_per_epoch + it;
            let stats =
                train_iteration(&mut state, config, source.vectors(), target.vectors(), step, &mut rng)?;
            sums[0] += stats.d1_loss;
            sums[1] += stats.d2_loss;
            sums[2] += stats.w_loss;
            sums[3] += stats.z_loss;
        }
        let scale = config.steps_per_epoch as f64;
        let criterion =
            mean_similarity_criterion(&state.w, source, target, config.criterion_k, &config.criterion_metric)?;
        state.history.push(EpochRecord {
            epoch: epoch + 1,
            criterion,
            d1_loss: sums[0] / scale,
            d2_loss: sums[1] / scale,
            w_loss: sums[2] / scale,
            z_loss: sums[3] / scale,
        });
        if criterion > state.best_criterion {
            state.best_criterion = criterion;
            state.best_w = state.w.clone();
            state.best_z = state.z.clone();
        }
        state.current_lr *= config.lr_decay_per_epoch;
        state.epoch = epoch + 1;
    }
    Ok(state)
}
