//! Bilinear sampling at real-valued coordinates with zero padding outside
//! the image. This is the interpolation the deformable convolution uses; it
//! is differentiable in both the image values and the coordinates.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The four integer taps around (y, x) with their weights, plus the weight
/// derivatives needed for coordinate gradients. Taps outside [0,h) x [0,w)
/// read as zero.
#[derive(Debug, Clone, Copy)]
pub struct BilinearTaps<S> {
    /// (y, x) integer coordinates, possibly out of bounds.
    pub corners: [(isize, isize); 4],
    pub weights: [S; 4],
    /// d(weight)/dy per corner.
    pub dw_dy: [S; 4],
    /// d(weight)/dx per corner.
    pub dw_dx: [S; 4],
}

#[inline]
pub fn bilinear_taps<S: Scalar>(y: S, x: S) -> BilinearTaps<S> {
    let y0 = y.floor();
    let x0 = x.floor();
    let ty = y - y0;
    let tx = x - x0;
    let one = S::one();
    let (iy, ix) = (y0.to_f64_lossy() as isize, x0.to_f64_lossy() as isize);
    BilinearTaps {
        corners: [(iy, ix), (iy, ix + 1), (iy + 1, ix), (iy + 1, ix + 1)],
        weights: [
            (one - ty) * (one - tx),
            (one - ty) * tx,
            ty * (one - tx),
            ty * tx,
        ],
        dw_dy: [-(one - tx), -tx, one - tx, tx],
        dw_dx: [-(one - ty), one - ty, -ty, ty],
    }
}

fn plane_bounds<S: Scalar>(f: &Tensor<S>, channel: usize) -> Result<(usize, usize, usize)> {
    let shape = f.shape();
    if shape.len() < 2 {
        return Err(Error::InvalidShape(format!(
            "bilinear sample expects at least 2 dims, got {shape:?}"
        )));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let channels = f.len() / (h * w);
    if channel >= channels {
        return Err(Error::InvalidParam(format!(
            "bilinear sample: channel {channel} out of {channels}"
        )));
    }
    Ok((channel * h * w, h, w))
}

/// Sample channel plane of `f` at real coordinates (y, x); zero outside.
pub fn bilinear_sample<S: Scalar>(f: &Tensor<S>, channel: usize, y: S, x: S) -> Result<S> {
    let (base, h, w) = plane_bounds(f, channel)?;
    let taps = bilinear_taps(y, x);
    let mut acc = S::zero();
    for (k, &(cy, cx)) in taps.corners.iter().enumerate() {
        if cy >= 0 && cx >= 0 && (cy as usize) < h && (cx as usize) < w {
            acc = acc + taps.weights[k] * f.data()[base + cy as usize * w + cx as usize];
        }
    }
    Ok(acc)
}

/// Gradients of `grad_out * bilinear_sample(f, channel, y, x)`:
/// sparse taps into f (flat indices) plus coordinate gradients.
pub fn bilinear_sample_backward<S: Scalar>(
    f: &Tensor<S>,
    channel: usize,
    y: S,
    x: S,
    grad_out: S,
) -> Result<(Vec<(usize, S)>, S, S)> {
    let (base, h, w) = plane_bounds(f, channel)?;
    let taps = bilinear_taps(y, x);
    let mut f_taps = Vec::with_capacity(4);
    let mut gy = S::zero();
    let mut gx = S::zero();
    for (k, &(cy, cx)) in taps.corners.iter().enumerate() {
        if cy >= 0 && cx >= 0 && (cy as usize) < h && (cx as usize) < w {
            let idx = base + cy as usize * w + cx as usize;
            f_taps.push((idx, grad_out * taps.weights[k]));
            let v = f.data()[idx];
            gy = gy + grad_out * taps.dw_dy[k] * v;
            gx = gx + grad_out * taps.dw_dx[k] * v;
        }
    }
    Ok((f_taps, gy, gx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradcheck, GradCheckConfig};
    use crate::rng::randn_seeded;

    #[test]
    fn integer_coordinates_read_exact_values() {
        let f: Tensor<f64> = randn_seeded(&[2, 4, 5], 1.0, 41).unwrap();
        for c in 0..2 {
            for y in 0..4 {
                for x in 0..5 {
                    let v = bilinear_sample(&f, c, y as f64, x as f64).unwrap();
                    let expect = f.data()[(c * 4 + y) * 5 + x];
                    assert_eq!(v.to_bits(), expect.to_bits());
                }
            }
        }
    }

    #[test]
    fn interpolates_linearly_between_neighbors() {
        let f = Tensor::from_vec(&[1, 1, 2], vec![2.0f64, 6.0]).unwrap();
        assert!((bilinear_sample(&f, 0, 0.0, 0.25).unwrap() - 3.0).abs() < 1e-12);
        assert!((bilinear_sample(&f, 0, 0.0, 0.5).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fades_to_zero_outside_the_image() {
        let f = Tensor::filled(&[1, 2, 2], 8.0f64).unwrap();
        // Half a pixel past the edge: only two taps remain in bounds.
        assert!((bilinear_sample(&f, 0, -0.5, 0.0).unwrap() - 4.0).abs() < 1e-12);
        // Fully outside.
        assert_eq!(bilinear_sample(&f, 0, -2.0, 0.0).unwrap(), 0.0);
        assert_eq!(bilinear_sample(&f, 0, 0.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn ramp_image_has_exact_gradient() {
        // f(y, x) = 3y + 2x sampled anywhere inside gives value 3y + 2x and
        // coordinate gradients (3, 2).
        let f = Tensor::from_fn(&[1, 6, 6], |i| {
            let (y, x) = (i / 6, i % 6);
            3.0 * y as f64 + 2.0 * x as f64
        })
        .unwrap();
        let (y, x) = (2.3f64, 1.7f64);
        let v = bilinear_sample(&f, 0, y, x).unwrap();
        assert!((v - (3.0 * y + 2.0 * x)).abs() < 1e-12);
        let (_, gy, gx) = bilinear_sample_backward(&f, 0, y, x, 1.0).unwrap();
        assert!((gy - 3.0).abs() < 1e-12);
        assert!((gx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradcheck_values_and_coordinates() {
        let f: Tensor<f64> = randn_seeded(&[1, 5, 5], 1.0, 47).unwrap();
        let coords = Tensor::from_vec(&[2], vec![1.37, 2.81]).unwrap();
        let fwd = |xs: &[Tensor<f64>]| {
            let v = bilinear_sample(&xs[0], 0, xs[1].data()[0], xs[1].data()[1])?;
            Tensor::from_vec(&[1], vec![v])
        };
        let bwd = |xs: &[Tensor<f64>], g: &Tensor<f64>| {
            let (taps, gy, gx) =
                bilinear_sample_backward(&xs[0], 0, xs[1].data()[0], xs[1].data()[1], g.data()[0])?;
            let mut gf = xs[0].zeros_like();
            for (idx, gv) in taps {
                gf.data_mut()[idx] += gv;
            }
            Ok(vec![gf, Tensor::from_vec(&[2], vec![gy, gx])?])
        };
        let report = gradcheck(
            &fwd,
            &bwd,
            &[f, coords],
            &["image", "coords"],
            &GradCheckConfig { tol: 1e-6, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed(), "{}", report.format_table());
    }

    #[test]
    fn weights_always_sum_to_one() {
        for (y, x) in [(0.1f64, 0.9), (-3.7, 2.2), (5.0, 5.0), (1.999, -0.001)] {
            let taps = bilinear_taps::<f64>(y, x);
            let sum: f64 = taps.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "({y},{x}) sum {sum}");
            // Derivative weights telescope to zero.
            assert!(taps.dw_dy.iter().sum::<f64>().abs() < 1e-12);
            assert!(taps.dw_dx.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
