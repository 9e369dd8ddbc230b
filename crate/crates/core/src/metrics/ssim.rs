//! Windowed structural similarity on unit-range grayscale images:
//! 11x11 Gaussian window (sigma 1.5), stabilizers C1 = 0.01^2 and
//! C2 = 0.03^2, statistics over valid windows only, mean over the map.

use crate::error::{Error, Result};
use crate::metrics::same_gray_dims;
use crate::tensor::Tensor;

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

fn window_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Valid-region separable correlation with the window; output is
/// (h-10) x (w-10).
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let wo = w - WINDOW + 1;
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * src[y * w + x + i];
            }
            rows[y * wo + x] = acc;
        }
    }
    let ho = h - WINDOW + 1;
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * rows[(y + i) * wo + x];
            }
            out[y * wo + x] = acc;
        }
    }
    out
}

/// Mean structural similarity; 1.0 exactly when the images are identical.
pub fn ssim(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<f64> {
    let (h, w) = same_gray_dims(a, b)?;
    if h < WINDOW || w < WINDOW {
        return Err(Error::InvalidParam(format!(
            "image {h}x{w} is smaller than the {WINDOW}x{WINDOW} window"
        )));
    }
    let k = window_kernel();
    let (pa, pb) = (a.data(), b.data());
    let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(pa, h, w, &k);
    let mu_b = filter_valid(pb, h, w, &k);
    let m_aa = filter_valid(&aa, h, w, &k);
    let m_bb = filter_valid(&bb, h, w, &k);
    let m_ab = filter_valid(&ab, h, w, &k);

    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = m_aa[i] - ma * ma;
        let vb = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
            / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    Ok((sum / mu_a.len() as f64).clamp(-1.0, 1.0))
}
