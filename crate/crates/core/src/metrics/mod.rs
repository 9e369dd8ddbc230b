//! Image quality metrics over [H,W] grayscale tensors in [0,1]:
//! windowed structural similarity, a phase-congruency/gradient feature
//! similarity, and a block co-occurrence texture score, plus directory
//! evaluation reports.
//!
//! Metrics run in f64: they judge trained outputs, so evaluation noise
//! should stay far below metric differences.

pub mod eval;
pub mod fsim;
pub mod scoot;
pub mod ssim;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Both inputs must be [H,W] with identical dims; returns (h, w).
fn same_gray_dims(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<(usize, usize)> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "metrics expect [H,W] grayscale tensors, got {sa:?} and {sb:?}"
        )));
    }
    if sa != sb {
        return Err(Error::ShapeMismatch(format!("image dims differ: {sa:?} vs {sb:?}")));
    }
    Ok((sa[0], sa[1]))
}

/// Separable Gaussian blur with mirror edges. Test and demo helper (the
/// blur-versus-noise comparisons), not part of any metric.
pub fn gaussian_blur(img: &Tensor<f64>, sigma: f64) -> Result<Tensor<f64>> {
    if img.shape().len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "blur expects [H,W], got {:?}",
            img.shape()
        )));
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    let mirror = |i: isize, len: usize| -> usize {
        let period = (2 * len - 2).max(1) as isize;
        let mut j = i.rem_euclid(period);
        if j >= len as isize {
            j = period - j;
        }
        j as usize
    };
    let src = img.data();
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xs = mirror(x as isize + k as isize - radius as isize, w);
                acc += kv * src[y * w + xs];
            }
            rows[y * w + x] = acc;
        }
    }
    Tensor::from_fn(&[h, w], |i| {
        let (y, x) = (i / w, i % w);
        let mut acc = 0.0;
        for (k, kv) in kernel.iter().enumerate() {
            let ys = mirror(y as isize + k as isize - radius as isize, h);
            acc += kv * rows[ys * w + x];
        }
        acc
    })
}
