//! Adversarial losses and their gradients.
//!
//! Label convention: the discriminator is pushed toward 1 on mapped ("fake")
//! vectors and 0 on native ("real") vectors, and each map is pushed to drive
//! its images toward the discriminator's 0 side. Expectations are batch
//! means. Wherever a probability was clamped, its logit gradient is zeroed so
//! that every analytic gradient is the exact derivative of the loss actually
//! computed.

use super::discriminator::{DiscriminatorGrads, DiscriminatorParams};
use super::AdversarialError;
use crate::numerics::Matrix;

/// Discriminator loss on one batch pair:
/// `−mean log D(fake) − mean log(1 − D(real))`, with gradients for the
/// discriminator parameters only (inputs are constants here).
pub fn disc_loss_and_grad(
    disc: &DiscriminatorParams,
    fake: &Matrix,
    real: &Matrix,
) -> Result<(f64, DiscriminatorGrads), AdversarialError> {
    if fake.rows() == 0 || real.rows() == 0 {
        return Err(AdversarialError::EmptyBatch);
    }
    let stacked = fake.vstack(real);
    let acts = disc.forward(&stacked)?;
    let nf = fake.rows() as f64;
    let nr = real.rows() as f64;
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; stacked.rows()];
    for i in 0..stacked.rows() {
        let p = acts.probs()[i];
        let gated = acts.clamped_flags()[i];
        if i < fake.rows() {
            loss -= p.ln() / nf;
            if !gated {
                dlogits[i] = (p - 1.0) / nf;
            }
        } else {
            loss -= (1.0 - p).ln() / nr;
            if !gated {
                dlogits[i] = p / nr;
            }
        }
    }
    let (grads, _) = disc.backward(&stacked, &acts, &dlogits);
    Ok((loss, grads))
}

/// Mapping loss through a chain of linear maps (each applied as `x ↦ x·Mᵀ`):
/// `−mean log(1 − D(chain(input))) − mean log D(real)`.
///
/// Only the FIRST map in the chain receives a gradient; later maps and the
/// discriminator are frozen. The second term does not depend on the map at
/// all — it contributes to the reported value and nothing to the gradient.
pub fn map_adv_loss_and_grad(
    chain: &[&Matrix],
    disc: &DiscriminatorParams,
    input_batch: &Matrix,
    real_batch: &Matrix,
) -> Result<(f64, Matrix), AdversarialError> {
    if chain.is_empty() {
        return Err(AdversarialError::EmptyChain);
    }
    if input_batch.rows() == 0 || real_batch.rows() == 0 {
        return Err(AdversarialError::EmptyBatch);
    }
    let mut width = input_batch.cols();
    for map in chain {
        if map.rows() != map.cols() || map.cols() != width {
            return Err(AdversarialError::DimensionMismatch { expected: width, got: map.cols() });
        }
        width = map.rows();
    }

    // Forward through the chain, keeping every intermediate batch.
    let mut stages: Vec<Matrix> = Vec::with_capacity(chain.len());
    for (k, map) in chain.iter().enumerate() {
        let prev = if k == 0 { input_batch } else { &stages[k - 1] };
        stages.push(prev.mul_bt(map));
    }
    let mapped = stages.last().expect("chain is nonempty");

    let acts_fake = disc.forward(mapped)?;
    let nf = input_batch.rows() as f64;
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; mapped.rows()];
    for i in 0..mapped.rows() {
        let p = acts_fake.probs()[i];
        loss -= (1.0 - p).ln() / nf;
        if !acts_fake.clamped_flags()[i] {
            dlogits[i] = p / nf;
        }
    }
    let acts_real = disc.forward(real_batch)?;
    let nr = real_batch.rows() as f64;
    for &p in acts_real.probs() {
        loss -= p.ln() / nr;
    }

    // Pull the logit gradient back to the chain head.
    let (_, dx) = disc.backward(mapped, &acts_fake, &dlogits);
    let mut dcur = dx;
    for map in chain.iter().skip(1).rev() {
        dcur = dcur.matmul(map);
    }
    let dmap = dcur.mul_at_b(input_batch);
    Ok((loss, dmap))
}
