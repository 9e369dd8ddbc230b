//! 2x2 stride-2 pooling for the encoder and spatial-pyramid pooling for the
//! region weight generators.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Reduction used inside pooling windows. Max everywhere by default; mean is
/// a config alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    #[default]
    Max,
    Mean,
}

/// 2x2 stride-2 max pooling. Requires even spatial dims.
pub fn maxpool2<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    pool2(x, PoolMode::Max)
}

pub fn maxpool2_backward<S: Scalar>(x: &Tensor<S>, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    pool2_backward(x, grad_out, PoolMode::Max)
}

/// 2x2 stride-2 pooling with a selectable reduction.
pub fn pool2<S: Scalar>(x: &Tensor<S>, mode: PoolMode) -> Result<Tensor<S>> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "pool2: spatial dims must be even, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow])?;
    let quarter = S::of_f64(0.25);
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = x.idx4(ni, ci, oy * 2, ox * 2);
                    let vals = [
                        x.data()[base],
                        x.data()[base + 1],
                        x.data()[base + w],
                        x.data()[base + w + 1],
                    ];
                    let v = match mode {
                        PoolMode::Max => {
                            let mut m = vals[0];
                            for &v in &vals[1..] {
                                if v > m {
                                    m = v;
                                }
                            }
                            m
                        }
                        PoolMode::Mean => (vals[0] + vals[1] + vals[2] + vals[3]) * quarter,
                    };
                    let oi = out.idx4(ni, ci, oy, ox);
                    out.data_mut()[oi] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Backward of [`pool2`]. For max, the gradient goes to the first (row-major)
/// maximal element of each window; for mean it is split evenly.
pub fn pool2_backward<S: Scalar>(
    x: &Tensor<S>,
    grad_out: &Tensor<S>,
    mode: PoolMode,
) -> Result<Tensor<S>> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "pool2 backward: spatial dims must be even, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    if grad_out.shape() != [n, c, oh, ow] {
        return Err(Error::ShapeMismatch(format!(
            "pool2 backward: grad shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, c, oh, ow]
        )));
    }
    let mut gx = x.zeros_like();
    let quarter = S::of_f64(0.25);
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = grad_out.data()[grad_out.idx4(ni, ci, oy, ox)];
                    let base = x.idx4(ni, ci, oy * 2, ox * 2);
                    let offs = [0, 1, w, w + 1];
                    match mode {
                        PoolMode::Max => {
                            let mut best = 0usize;
                            for (k, &o) in offs.iter().enumerate().skip(1) {
                                if x.data()[base + o] > x.data()[base + offs[best]] {
                                    best = k;
                                }
                            }
                            let t = base + offs[best];
                            gx.data_mut()[t] = gx.data()[t] + g;
                        }
                        PoolMode::Mean => {
                            let share = g * quarter;
                            for &o in &offs {
                                gx.data_mut()[base + o] = gx.data()[base + o] + share;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(gx)
}

/// Bin boundaries for pyramid pooling: bin i covers [floor(i*len/bins),
/// ceil((i+1)*len/bins)), which is never empty and tiles the axis.
#[inline]
pub fn spp_bin(i: usize, len: usize, bins: usize) -> (usize, usize) {
    let lo = i * len / bins;
    let hi = ((i + 1) * len).div_ceil(bins);
    (lo, hi)
}

/// Spatial pyramid pooling: reduce a C x h x w region to C x bins x bins
/// regardless of h and w.
pub fn spp_pool<S: Scalar>(region: &Tensor<S>, bins: usize, mode: PoolMode) -> Result<Tensor<S>> {
    if bins == 0 {
        return Err(Error::InvalidParam("spp_pool: bins must be positive".into()));
    }
    let (c, h, w) = region.dims3()?;
    let mut out = Tensor::zeros(&[c, bins, bins])?;
    for ci in 0..c {
        for by in 0..bins {
            let (y0, y1) = spp_bin(by, h, bins);
            for bx in 0..bins {
                let (x0, x1) = spp_bin(bx, w, bins);
                let v = match mode {
                    PoolMode::Max => {
                        let mut m = region.data()[(ci * h + y0) * w + x0];
                        for y in y0..y1 {
                            for x in x0..x1 {
                                let v = region.data()[(ci * h + y) * w + x];
                                if v > m {
                                    m = v;
                                }
                            }
                        }
                        m
                    }
                    PoolMode::Mean => {
                        let mut s = S::zero();
                        for y in y0..y1 {
                            for x in x0..x1 {
                                s = s + region.data()[(ci * h + y) * w + x];
                            }
                        }
                        s / S::from_usize((y1 - y0) * (x1 - x0)).unwrap()
                    }
                };
                out.data_mut()[(ci * bins + by) * bins + bx] = v;
            }
        }
    }
    Ok(out)
}

/// Backward of [`spp_pool`], routing each bin's gradient to the first
/// (row-major) maximum or spreading it evenly in mean mode. Note a single
/// input element can receive gradient from several bins when h < bins.
pub fn spp_pool_backward<S: Scalar>(
    region: &Tensor<S>,
    bins: usize,
    mode: PoolMode,
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>> {
    if bins == 0 {
        return Err(Error::InvalidParam("spp_pool backward: bins must be positive".into()));
    }
    let (c, h, w) = region.dims3()?;
    if grad_out.shape() != [c, bins, bins] {
        return Err(Error::ShapeMismatch(format!(
            "spp_pool backward: grad shape {:?}, expected {:?}",
            grad_out.shape(),
            [c, bins, bins]
        )));
    }
    let mut gx = region.zeros_like();
    for ci in 0..c {
        for by in 0..bins {
            let (y0, y1) = spp_bin(by, h, bins);
            for bx in 0..bins {
                let (x0, x1) = spp_bin(bx, w, bins);
                let g = grad_out.data()[(ci * bins + by) * bins + bx];
                match mode {
                    PoolMode::Max => {
                        let mut best = (y0, x0);
                        let mut best_v = region.data()[(ci * h + y0) * w + x0];
                        for y in y0..y1 {
                            for x in x0..x1 {
                                let v = region.data()[(ci * h + y) * w + x];
                                if v > best_v {
                                    best_v = v;
                                    best = (y, x);
                                }
                            }
                        }
                        let t = (ci * h + best.0) * w + best.1;
                        gx.data_mut()[t] = gx.data()[t] + g;
                    }
                    PoolMode::Mean => {
                        let share = g / S::from_usize((y1 - y0) * (x1 - x0)).unwrap();
                        for y in y0..y1 {
                            for x in x0..x1 {
                                let t = (ci * h + y) * w + x;
                                gx.data_mut()[t] = gx.data()[t] + share;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(gx)
}
