//! Instance normalization without affine parameters: each (sample, channel)
//! plane is shifted to zero mean and scaled by 1/sqrt(var + eps).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Population statistics of one plane (divide by count, not count - 1).
fn plane_stats<S: Scalar>(plane: &[S]) -> (S, S) {
    let count = S::from_usize(plane.len()).unwrap();
    let mut mean = S::zero();
    for &v in plane {
        mean = mean + v;
    }
    mean = mean / count;
    let mut var = S::zero();
    for &v in plane {
        let d = v - mean;
        var = var + d * d;
    }
    (mean, var / count)
}

pub fn instance_norm<S: Scalar>(x: &Tensor<S>, eps: f64) -> Result<Tensor<S>> {
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let eps = S::of_f64(eps);
    let mut out = x.clone();
    for pi in 0..n * c {
        let slice = &mut out.data_mut()[pi * plane..(pi + 1) * plane];
        let (mean, var) = plane_stats(slice);
        let inv_std = S::one() / (var + eps).sqrt();
        for v in slice.iter_mut() {
            *v = (*v - mean) * inv_std;
        }
    }
    Ok(out)
}

/// Backward of [`instance_norm`]: with xh the normalized plane,
/// dx = (g - mean(g) - xh * mean(g * xh)) / sqrt(var + eps).
pub fn instance_norm_backward<S: Scalar>(
    x: &Tensor<S>,
    eps: f64,
    grad_out: &Tensor<S>,
) -> Result<Tensor<S>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch(format!(
            "instance norm backward: input {:?} vs grad {:?}",
            x.shape(),
            grad_out.shape()
        )));
    }
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let count = S::from_usize(plane).unwrap();
    let eps = S::of_f64(eps);
    let mut gx = x.zeros_like();
    for pi in 0..n * c {
        let xs = &x.data()[pi * plane..(pi + 1) * plane];
        let gs = &grad_out.data()[pi * plane..(pi + 1) * plane];
        let (mean, var) = plane_stats(xs);
        let inv_std = S::one() / (var + eps).sqrt();
        let mut g_mean = S::zero();
        let mut gxh_mean = S::zero();
        for (&g, &xv) in gs.iter().zip(xs) {
            g_mean = g_mean + g;
            gxh_mean = gxh_mean + g * (xv - mean) * inv_std;
        }
        g_mean = g_mean / count;
        gxh_mean = gxh_mean / count;
        let out = &mut gx.data_mut()[pi * plane..(pi + 1) * plane];
        for (o, (&g, &xv)) in out.iter_mut().zip(gs.iter().zip(xs)) {
            let xh = (xv - mean) * inv_std;
            *o = (g - g_mean - xh * gxh_mean) * inv_std;
        }
    }
    Ok(gx)
}
