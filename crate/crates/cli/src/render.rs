//! Rasterization for the inspection outputs: channel-mean heatmaps and
//! sampling-point overlays.

use panet_core::error::{Error, Result};
use panet_core::model::inspect::AncestralTap;
use panet_core::tensor::Tensor;

/// Mean over channels of a single-sample feature map: [1, C, H, W] -> [1, H, W].
pub fn channel_mean(t: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (n, c, h, w) = t.dims4()?;
    if n != 1 {
        return Err(Error::InvalidParam(format!("channel mean wants 1 sample, got {n}")));
    }
    let mut out = vec![0f32; h * w];
    for ch in 0..c {
        let plane = &t.data()[ch * h * w..(ch + 1) * h * w];
        for (o, v) in out.iter_mut().zip(plane) {
            *o += v;
        }
    }
    let inv = 1.0 / c as f32;
    for o in &mut out {
        *o *= inv;
    }
    Tensor::from_vec(&[1, h, w], out)
}

/// Min-max rescale to [0,1] in place; constant maps become all 0.5.
pub fn normalize_unit(t: &mut Tensor<f32>) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in t.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        for v in t.data_mut() {
            *v = 0.5;
        }
        return;
    }
    for v in t.data_mut() {
        *v = (*v - lo) / span;
    }
}

/// Draw each tap as a green pixel over a dimmed grayscale copy of the
/// photo ([1|3, H, W]). Returns the RGB image and how many taps landed
/// inside the frame (taps are rounded to the nearest pixel; the math can
/// place them outside).
pub fn overlay_taps(
    photo: &Tensor<f32>,
    taps: &[AncestralTap],
) -> Result<(Tensor<f32>, usize)> {
    let (c, h, w) = photo.dims3()?;
    let mut gray = vec![0f32; h * w];
    for ch in 0..c {
        let plane = &photo.data()[ch * h * w..(ch + 1) * h * w];
        for (o, v) in gray.iter_mut().zip(plane) {
            *o += v;
        }
    }
    let dim = 0.6 / c as f32;
    for v in &mut gray {
        *v *= dim;
    }
    let mut rgb = vec![0f32; 3 * h * w];
    for ch in 0..3 {
        rgb[ch * h * w..(ch + 1) * h * w].copy_from_slice(&gray);
    }
    let mut visible = 0;
    for t in taps {
        let (y, x) = (t.y.round(), t.x.round());
        if y < 0.0 || x < 0.0 || y >= h as f64 || x >= w as f64 {
            continue;
        }
        visible += 1;
        let at = y as usize * w + x as usize;
        rgb[at] = 0.0;
        rgb[h * w + at] = 1.0;
        rgb[2 * h * w + at] = 0.0;
    }
    Ok((Tensor::from_vec(&[3, h, w], rgb)?, visible))
}
