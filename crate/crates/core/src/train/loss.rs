//! Pixel loss and least-squares adversarial losses.
//!
//! Means (not sums) everywhere, so thresholds and step sizes transfer across
//! image sizes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean squared difference over all elements.
pub fn euclidean_loss<S: Scalar>(pred: &Tensor<S>, gt: &Tensor<S>) -> Result<S> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "loss: prediction {:?} vs target {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let count = S::of_f64(pred.len() as f64);
    let mut acc = S::zero();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let d = p - g;
        acc += d * d;
    }
    Ok(acc / count)
}

/// d loss / d pred = 2 (pred - gt) / count.
pub fn euclidean_loss_backward<S: Scalar>(pred: &Tensor<S>, gt: &Tensor<S>) -> Result<Tensor<S>> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "loss backward: prediction {:?} vs target {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let scale = S::of_f64(2.0 / pred.len() as f64);
    let mut g = pred.clone();
    for (d, &t) in g.data_mut().iter_mut().zip(gt.data()) {
        *d = (*d - t) * scale;
    }
    Ok(g)
}

/// Least-squares GAN objectives over patch score maps:
/// discriminator pushes real scores to 1 and fake scores to 0, the
/// generator pushes fake scores to 1.
/// Returns (loss_d, loss_g_adv) =
/// (mean((real-1)^2)/2 + mean(fake^2)/2, mean((fake-1)^2)).
pub fn lsgan_losses<S: Scalar>(d_real: &Tensor<S>, d_fake: &Tensor<S>) -> Result<(S, S)> {
    let half = S::of_f64(0.5);
    let one = S::one();
    let nr = S::of_f64(d_real.len() as f64);
    let nf = S::of_f64(d_fake.len() as f64);
    let mut real_term = S::zero();
    for &r in d_real.data() {
        let d = r - one;
        real_term += d * d;
    }
    let mut fake_term = S::zero();
    let mut g_term = S::zero();
    for &f in d_fake.data() {
        fake_term += f * f;
        let d = f - one;
        g_term += d * d;
    }
    let loss_d = half * real_term / nr + half * fake_term / nf;
    let loss_g = g_term / nf;
    Ok((loss_d, loss_g))
}

/// Gradients of loss_d wrt the two score maps:
/// d/d_real = (real - 1) / count_real, d/d_fake = fake / count_fake.
pub fn lsgan_d_backward<S: Scalar>(
    d_real: &Tensor<S>,
    d_fake: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let inv_r = S::of_f64(1.0 / d_real.len() as f64);
    let inv_f = S::of_f64(1.0 / d_fake.len() as f64);
    let one = S::one();
    let g_real = d_real.map(|r| (r - one) * inv_r);
    let g_fake = d_fake.map(|f| f * inv_f);
    Ok((g_real, g_fake))
}

/// The generator's adversarial objective alone: mean((fake - 1)^2).
pub fn lsgan_g_loss<S: Scalar>(d_fake: &Tensor<S>) -> S {
    let one = S::one();
    let n = S::of_f64(d_fake.len() as f64);
    let mut acc = S::zero();
    for &f in d_fake.data() {
        let d = f - one;
        acc += d * d;
    }
    acc / n
}

/// Gradient of loss_g_adv wrt the fake score map: 2 (fake - 1) / count.
pub fn lsgan_g_backward<S: Scalar>(d_fake: &Tensor<S>) -> Result<Tensor<S>> {
    let scale = S::of_f64(2.0 / d_fake.len() as f64);
    let one = S::one();
    Ok(d_fake.map(|f| (f - one) * scale))
}
