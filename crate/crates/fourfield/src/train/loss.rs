//! The adversarial objective and its two regularizers.
//!
//! Non-saturating losses: L_D = mean softplus(−s_real) + mean
//! softplus(s_fake); L_G = mean softplus(−s_fake). R1 is half the mean
//! squared pixel-gradient norm of the discriminator at real samples; its
//! weight-gradient is obtained by a second reverse pass over the
//! gradient graph. The consistency regularizer ties the upsampled RGB to
//! the direct per-pixel feature-to-RGB map at sampled pixels.

use crate::config::UpsampleMode;
use crate::disc::BoundDiscriminator;
use crate::error::Result;
use crate::render::BoundUpsampler;
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Discriminator loss over score batches [B, 1].
pub fn adv_loss_d(real_scores: &Tensor, fake_scores: &Tensor) -> Result<Tensor> {
    let real_term = real_scores.neg()?.softplus()?.mean_all()?;
    let fake_term = fake_scores.softplus()?.mean_all()?;
    real_term.add(&fake_term)
}

/// Generator loss over fake scores [B, 1].
pub fn adv_loss_g(fake_scores: &Tensor) -> Result<Tensor> {
    fake_scores.neg()?.softplus()?.mean_all()
}

/// R1 from already-computed scores: ½·mean over the batch of the squared
/// gradient norm of `scores.sum()` w.r.t. `input` (a leaf with
/// `requires_grad`). Returned as a live tensor so a second backward pass
/// can reach discriminator weights through the gradient graph.
pub fn r1_penalty_from_scores(scores: &Tensor, input: &Tensor) -> Result<Tensor> {
    let batch = input.shape()[0] as f64;
    let score_sum = scores.sum_all()?;
    let grad = score_sum.backward_tensors(&[input])?.remove(0);
    grad.mul(&grad)?.sum_all()?.scale(0.5 / batch)
}

/// R1 for a bound discriminator on a real batch.
pub fn r1_penalty(disc: &BoundDiscriminator, real_input: &Tensor) -> Result<Tensor> {
    let scores = disc.score(real_input)?;
    r1_penalty_from_scores(&scores, real_input)
}

/// Consistency regularizer: for `samples` random output pixels, the
/// squared difference between (a) the upsampled RGB and (b) the direct
/// 1×1 feature-to-RGB at the corresponding low-resolution pixel, mean
/// over samples. Identically zero in `Direct` mode, where both paths are
/// the same computation.
pub fn nerf_path_reg(
    upsampler: &BoundUpsampler,
    features: &Tensor,
    h: usize,
    w: usize,
    mode: UpsampleMode,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    assert!(samples >= 1, "path regularizer needs at least one sample");
    let up = upsampler.apply(features, h, w, mode)?;
    let direct = upsampler.direct_rgb(features)?;
    let (out_h, out_w) = match mode {
        UpsampleMode::Direct => (h, w),
        UpsampleMode::Up2x => (2 * h, 2 * w),
    };
    let scale = match mode {
        UpsampleMode::Direct => 1,
        UpsampleMode::Up2x => 2,
    };
    let mut acc: Option<Tensor> = None;
    for _ in 0..samples {
        let py = rng.gen_range(0..out_h);
        let px = rng.gen_range(0..out_w);
        let hi = up.slice(&[(py * out_w + px, py * out_w + px + 1), (0, 3)])?;
        let lo_idx = (py / scale) * w + px / scale;
        let lo = direct.slice(&[(lo_idx, lo_idx + 1), (0, 3)])?;
        let d = hi.sub(&lo)?;
        let term = d.mul(&d)?.sum_all()?;
        acc = Some(match acc {
            Some(a) => a.add(&term)?,
            None => term,
        });
    }
    acc.unwrap().scale(1.0 / samples as f64)
}
