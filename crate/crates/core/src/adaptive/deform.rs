//! Deformable convolution: each kernel tap samples the input at its regular
//! grid position displaced by a learned per-pixel offset, through bilinear
//! interpolation with zero padding. Output pixel p of channel o is
//!
//!   sum over taps k and input channels c of
//!     w[o, c, k] * input[c](p + g_k + offset_p(k)) + bias[o]
//!
//! where g_k runs row-major over the centered kernel grid. Sampled patches
//! are packed into the same column layout as the standard convolution, so a
//! zero offset field reproduces `conv2d` exactly, arithmetic included.

use crate::error::{Error, Result};
use crate::nn::bilinear::bilinear_taps;
use crate::nn::conv::{ConvGrads, ConvParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::offset::OffsetField;

/// Gradients of a deformable convolution: standard conv gradients plus the
/// gradient with respect to the offset field.
#[derive(Debug, Clone)]
pub struct DeformGrads<S> {
    pub input: Tensor<S>,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub offsets: Tensor<S>,
}

struct DeformGeom {
    n: usize,
    in_c: usize,
    out_c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
}

fn check_deform<S: Scalar>(
    f: &Tensor<S>,
    p: &ConvParams<S>,
    offsets: &OffsetField<S>,
) -> Result<DeformGeom> {
    let (n, in_c, h, w) = f.dims4()?;
    let wshape = p.weight.shape();
    if wshape.len() != 4 {
        return Err(Error::InvalidShape(format!(
            "deformable conv: weight must be 4-d, got {wshape:?}"
        )));
    }
    let (out_c, w_in, kh, kw) = (wshape[0], wshape[1], wshape[2], wshape[3]);
    if w_in != in_c {
        return Err(Error::ShapeMismatch(format!(
            "deformable conv: input has {in_c} channels, weight expects {w_in}"
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "deformable conv: kernel must be odd, got {kh}x{kw}"
        )));
    }
    if p.bias.shape() != [out_c] {
        return Err(Error::ShapeMismatch(format!(
            "deformable conv: bias shape {:?}, expected [{out_c}]",
            p.bias.shape()
        )));
    }
    if offsets.kernel() != (kh, kw) {
        return Err(Error::ShapeMismatch(format!(
            "deformable conv: offsets are for a {:?} kernel, weight is {kh}x{kw}",
            offsets.kernel()
        )));
    }
    let (on, _, oh, ow) = offsets.tensor().dims4()?;
    if (on, oh, ow) != (n, h, w) {
        return Err(Error::ShapeMismatch(format!(
            "deformable conv: offset field {:?} does not cover input {:?}",
            offsets.tensor().shape(),
            f.shape()
        )));
    }
    Ok(DeformGeom { n, in_c, out_c, h, w, kh, kw })
}

/// Per-pixel bilinear geometry for one kernel tap: up to four (flat index,
/// weight, d weight/dy, d weight/dx) entries, already filtered to in-bounds
/// corners with nonzero weight. Entry order follows the corner order of
/// `bilinear_taps`, which keeps per-element accumulation order fixed.
struct TapPlan<S> {
    idx: Vec<u32>,
    wt: Vec<S>,
    dwy: Vec<S>,
    dwx: Vec<S>,
    cnt: Vec<u8>,
}

impl<S: Scalar> TapPlan<S> {
    fn with_capacity(pix: usize) -> Self {
        TapPlan {
            idx: vec![0; pix * 4],
            wt: vec![S::zero(); pix * 4],
            dwy: vec![S::zero(); pix * 4],
            dwx: vec![S::zero(); pix * 4],
            cnt: vec![0; pix],
        }
    }

    /// Fill the plan for kernel tap k over every output pixel.
    #[allow(clippy::too_many_arguments)]
    fn build(&mut self, off_n: &[S], h: usize, w: usize, kh: usize, kw: usize, k: usize) {
        let plane = h * w;
        let gy = (k / kw) as isize - (kh / 2) as isize;
        let gx = (k % kw) as isize - (kw / 2) as isize;
        let dy_row = &off_n[(2 * k) * plane..(2 * k + 1) * plane];
        let dx_row = &off_n[(2 * k + 1) * plane..(2 * k + 2) * plane];
        let mut p = 0;
        for y in 0..h {
            for x in 0..w {
                let sy = S::from_isize(y as isize + gy).unwrap() + dy_row[p];
                let sx = S::from_isize(x as isize + gx).unwrap() + dx_row[p];
                let taps = bilinear_taps(sy, sx);
                let mut j = 0;
                for (ti, &(cy, cx)) in taps.corners.iter().enumerate() {
                    let wt = taps.weights[ti];
                    if wt == S::zero() || cy < 0 || cx < 0 || cy >= h as isize || cx >= w as isize
                    {
                        continue;
                    }
                    let slot = p * 4 + j;
                    self.idx[slot] = (cy as usize * w + cx as usize) as u32;
                    self.wt[slot] = wt;
                    self.dwy[slot] = taps.dw_dy[ti];
                    self.dwx[slot] = taps.dw_dx[ti];
                    j += 1;
                }
                self.cnt[p] = j as u8;
                p += 1;
            }
        }
    }
}

/// Gather bilinear samples for one image into conv-layout columns:
/// cols[(c*kh*kw + k), y*w + x] = input[c](y + g_k.y + dy, x + g_k.x + dx).
/// Integer sample points take the single-tap fast path, which makes the
/// zero-offset case bitwise identical to `im2col`. The tap geometry is
/// shared by all channels, so it is planned once per kernel tap and the
/// channel sweep runs over contiguous column rows and one L1-sized input
/// plane at a time.
fn deform_gather<S: Scalar>(
    f_n: &[S],
    off_n: &[S],
    in_c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    cols: &mut [S],
) {
    let k_taps = kh * kw;
    let pix = h * w;
    let plane = h * w;
    let mut plan = TapPlan::with_capacity(pix);
    for k in 0..k_taps {
        plan.build(off_n, h, w, kh, kw, k);
        for c in 0..in_c {
            let f_plane = &f_n[c * plane..(c + 1) * plane];
            let col_row = &mut cols[(c * k_taps + k) * pix..(c * k_taps + k + 1) * pix];
            for p in 0..pix {
                let mut acc = S::zero();
                for j in 0..plan.cnt[p] as usize {
                    let slot = p * 4 + j;
                    acc = acc + plan.wt[slot] * f_plane[plan.idx[slot] as usize];
                }
                col_row[p] = acc;
            }
        }
    }
}

/// Deformable convolution, stride 1, shape-preserving padding.
pub fn deform_conv2d<S: Scalar>(
    f: &Tensor<S>,
    p: &ConvParams<S>,
    offsets: &OffsetField<S>,
) -> Result<Tensor<S>> {
    let g = check_deform(f, p, offsets)?;
    let k_col = g.in_c * g.kh * g.kw;
    let pix = g.h * g.w;
    let mut cols = vec![S::zero(); k_col * pix];
    let mut out = Tensor::zeros(&[g.n, g.out_c, g.h, g.w])?;
    let in_plane = g.in_c * pix;
    let off_plane = 2 * g.kh * g.kw * pix;
    let out_plane = g.out_c * pix;
    for ni in 0..g.n {
        deform_gather(
            &f.data()[ni * in_plane..(ni + 1) * in_plane],
            &offsets.tensor().data()[ni * off_plane..(ni + 1) * off_plane],
            g.in_c,
            g.h,
            g.w,
            g.kh,
            g.kw,
            &mut cols,
        );
        let out_n = &mut out.data_mut()[ni * out_plane..(ni + 1) * out_plane];
        S::gemm(
            g.out_c,
            k_col,
            pix,
            S::one(),
            p.weight.data(),
            k_col as isize,
            1,
            &cols,
            pix as isize,
            1,
            S::zero(),
            out_n,
            pix as isize,
            1,
        );
        for oc in 0..g.out_c {
            let b = p.bias.data()[oc];
            for v in &mut out_n[oc * pix..(oc + 1) * pix] {
                *v = *v + b;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`deform_conv2d`] with respect to input, weights, bias and
/// the offset field.
pub fn deform_conv2d_backward<S: Scalar>(
    f: &Tensor<S>,
    p: &ConvParams<S>,
    offsets: &OffsetField<S>,
    grad_out: &Tensor<S>,
) -> Result<DeformGrads<S>> {
    let g = check_deform(f, p, offsets)?;
    if grad_out.shape() != [g.n, g.out_c, g.h, g.w] {
        return Err(Error::ShapeMismatch(format!(
            "deformable conv backward: grad shape {:?}, expected {:?}",
            grad_out.shape(),
            [g.n, g.out_c, g.h, g.w]
        )));
    }
    let k_taps = g.kh * g.kw;
    let k_col = g.in_c * k_taps;
    let pix = g.h * g.w;
    let plane = pix;
    let mut cols = vec![S::zero(); k_col * pix];
    let mut grad_cols = vec![S::zero(); k_col * pix];
    let mut grads = DeformGrads {
        input: f.zeros_like(),
        weight: p.weight.zeros_like(),
        bias: p.bias.zeros_like(),
        offsets: offsets.tensor().zeros_like(),
    };
    let in_plane = g.in_c * pix;
    let off_plane = 2 * k_taps * pix;
    let out_plane = g.out_c * pix;
    for ni in 0..g.n {
        let f_n = &f.data()[ni * in_plane..(ni + 1) * in_plane];
        let off_n = &offsets.tensor().data()[ni * off_plane..(ni + 1) * off_plane];
        let g_n = &grad_out.data()[ni * out_plane..(ni + 1) * out_plane];
        deform_gather(f_n, off_n, g.in_c, g.h, g.w, g.kh, g.kw, &mut cols);
        // grad_w += g_n * cols^T, computed as grad_w^T += cols * g_n^T so the
        // large cols matrix is traversed contiguously.
        S::gemm(
            k_col,
            pix,
            g.out_c,
            S::one(),
            &cols,
            pix as isize,
            1,
            g_n,
            1,
            pix as isize,
            S::one(),
            grads.weight.data_mut(),
            1,
            k_col as isize,
        );
        // grad_cols = W^T * g_n
        S::gemm(
            k_col,
            g.out_c,
            pix,
            S::one(),
            p.weight.data(),
            1,
            k_col as isize,
            g_n,
            pix as isize,
            1,
            S::zero(),
            &mut grad_cols,
            pix as isize,
            1,
        );
        // Scatter column gradients back through the bilinear taps. The tap
        // geometry (and the coordinate gradient of each corner) is shared by
        // all input channels, so plan per kernel tap and sweep channels with
        // contiguous column reads, accumulating the offset gradients in
        // per-pixel buffers across the channel sweep.
        let gf_n = &mut grads.input.data_mut()[ni * in_plane..(ni + 1) * in_plane];
        let goff_n = &mut grads.offsets.data_mut()[ni * off_plane..(ni + 1) * off_plane];
        let mut plan = TapPlan::with_capacity(pix);
        let mut acc_dy = vec![S::zero(); pix];
        let mut acc_dx = vec![S::zero(); pix];
        for k in 0..k_taps {
            plan.build(off_n, g.h, g.w, g.kh, g.kw, k);
            acc_dy.fill(S::zero());
            acc_dx.fill(S::zero());
            for c in 0..g.in_c {
                let f_plane = &f_n[c * plane..(c + 1) * plane];
                let gf_plane = &mut gf_n[c * plane..(c + 1) * plane];
                let gcol_row = &grad_cols[(c * k_taps + k) * pix..(c * k_taps + k + 1) * pix];
                for p in 0..pix {
                    let gc = gcol_row[p];
                    for j in 0..plan.cnt[p] as usize {
                        let slot = p * 4 + j;
                        let src = plan.idx[slot] as usize;
                        let fv = f_plane[src];
                        gf_plane[src] = gf_plane[src] + gc * plan.wt[slot];
                        acc_dy[p] = acc_dy[p] + gc * plan.dwy[slot] * fv;
                        acc_dx[p] = acc_dx[p] + gc * plan.dwx[slot] * fv;
                    }
                }
            }
            let goff_dy = &mut goff_n[(2 * k) * plane..(2 * k + 1) * plane];
            for p in 0..pix {
                goff_dy[p] = goff_dy[p] + acc_dy[p];
            }
            let goff_dx = &mut goff_n[(2 * k + 1) * plane..(2 * k + 2) * plane];
            for p in 0..pix {
                goff_dx[p] = goff_dx[p] + acc_dx[p];
            }
        }
        for oc in 0..g.out_c {
            let mut s = S::zero();
            for &gv in &g_n[oc * pix..(oc + 1) * pix] {
                s = s + gv;
            }
            grads.bias.data_mut()[oc] = grads.bias.data()[oc] + s;
        }
    }
    Ok(grads)
}

/// Convenience for tests and the inspector: conv gradients only.
impl<S> From<DeformGrads<S>> for ConvGrads<S> {
    fn from(g: DeformGrads<S>) -> Self {
        ConvGrads { input: g.input, weight: g.weight, bias: g.bias }
    }
}
