//! Block-wise style similarity from gray-level co-occurrence statistics.
//!
//! Each image is quantized to 6 gray levels, partitioned into k x k block
//! grids (k in {4, 8}), and per block a normalized co-occurrence matrix at
//! offset (1,1) yields contrast and energy. Block scores compare those two
//! statistics between the images; the final score averages blocks, then
//! grids.

use crate::error::{Error, Result};
use crate::metrics::same_gray_dims;
use crate::tensor::Tensor;

const GRAY_LEVELS: usize = 6;
const BLOCK_GRIDS: [usize; 2] = [4, 8];
const STABILIZER: f64 = 1e-4;
const MIN_SIDE: usize = 8;

fn quantize(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * GRAY_LEVELS as f64) as usize).min(GRAY_LEVELS - 1)
}

/// (contrast, energy) of the normalized co-occurrence matrix over pixel
/// pairs (y,x) -> (y+1,x+1) inside the block, or None when the block has
/// no such pair.
fn block_stats(img: &[f64], w: usize, y0: usize, y1: usize, x0: usize, x1: usize) -> Option<(f64, f64)> {
    if y1 - y0 < 2 || x1 - x0 < 2 {
        return None;
    }
    let mut glcm = [[0.0f64; GRAY_LEVELS]; GRAY_LEVELS];
    let pairs = ((y1 - y0 - 1) * (x1 - x0 - 1)) as f64;
    for y in y0..y1 - 1 {
        for x in x0..x1 - 1 {
            let i = quantize(img[y * w + x]);
            let j = quantize(img[(y + 1) * w + x + 1]);
            glcm[i][j] += 1.0 / pairs;
        }
    }
    let mut contrast = 0.0;
    let mut energy = 0.0;
    for i in 0..GRAY_LEVELS {
        for j in 0..GRAY_LEVELS {
            let p = glcm[i][j];
            let d = i as f64 - j as f64;
            contrast += p * d * d;
            energy += p * p;
        }
    }
    Some((contrast, energy))
}

fn stat_sim(a: f64, b: f64) -> f64 {
    (2.0 * a * b + STABILIZER) / (a * a + b * b + STABILIZER)
}

/// Style similarity in [0,1]; exactly 1.0 on identical images. Requires
/// both sides of both images to be at least 8px.
pub fn scoot(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<f64> {
    let (h, w) = same_gray_dims(a, b)?;
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::InvalidParam(format!(
            "image {h}x{w} is below the {MIN_SIDE}px minimum side"
        )));
    }
    let mut grid_scores = Vec::with_capacity(BLOCK_GRIDS.len());
    for k in BLOCK_GRIDS {
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in 0..k {
            let (y0, y1) = (r * h / k, (r + 1) * h / k);
            for c in 0..k {
                let (x0, x1) = (c * w / k, (c + 1) * w / k);
                let (sa, sb) = match (
                    block_stats(a.data(), w, y0, y1, x0, x1),
                    block_stats(b.data(), w, y0, y1, x0, x1),
                ) {
                    (Some(sa), Some(sb)) => (sa, sb),
                    _ => continue,
                };
                sum += 0.5 * (stat_sim(sa.0, sb.0) + stat_sim(sa.1, sb.1));
                count += 1;
            }
        }
        if count > 0 {
            grid_scores.push(sum / count as f64);
        }
    }
    if grid_scores.is_empty() {
        return Err(Error::InvalidParam(format!(
            "image {h}x{w} yields no blocks with co-occurrence pairs"
        )));
    }
    let mean = grid_scores.iter().sum::<f64>() / grid_scores.len() as f64;
    Ok(mean.clamp(0.0, 1.0))
}
