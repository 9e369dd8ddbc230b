//! Standard and transposed 2-d convolution with zero padding, implemented as
//! im2col/col2im plus one GEMM per sample. The column layout (channel-major,
//! then kernel row, then kernel column) is shared with the deformable
//! convolution so that zero offsets reproduce this op bit for bit.

use crate::error::{Error, Result};
use crate::rng::randn_seeded;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Geometry of a convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        let spec = ConvSpec { in_channels, out_channels, kernel, stride, padding };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidParam("conv: channel counts must be positive".into()));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(Error::InvalidParam("conv: kernel dims must be positive".into()));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::InvalidParam("conv: stride must be positive".into()));
        }
        Ok(())
    }

    /// 3x3, stride 1, pad 1: the shape-preserving workhorse.
    pub fn k3s1p1(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel: (3, 3), stride: (1, 1), padding: (1, 1) }
    }

    /// 4x4, stride 2, pad 1: halves each spatial dim (doubles for transpose).
    pub fn k4s2p1(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel: (4, 4), stride: (2, 2), padding: (1, 1) }
    }

    /// 4x4, stride 1, pad 1: shrinks each spatial dim by one.
    pub fn k4s1p1(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel: (4, 4), stride: (1, 1), padding: (1, 1) }
    }

    /// Pointwise 1x1.
    pub fn k1s1(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel: (1, 1), stride: (1, 1), padding: (0, 0) }
    }

    /// Output spatial dims when used as a forward convolution.
    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = conv_out(h, self.kernel.0, self.stride.0, self.padding.0);
        let ow = conv_out(w, self.kernel.1, self.stride.1, self.padding.1);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::InvalidParam(format!(
                "conv: input {h}x{w} too small for kernel {:?} stride {:?} padding {:?}",
                self.kernel, self.stride, self.padding
            ))),
        }
    }

    /// Output spatial dims when used as a transposed convolution.
    pub fn transpose_out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = (h - 1) * self.stride.0 + self.kernel.0;
        let ow = (w - 1) * self.stride.1 + self.kernel.1;
        if oh <= 2 * self.padding.0 || ow <= 2 * self.padding.1 {
            return Err(Error::InvalidParam(format!(
                "transposed conv: input {h}x{w} produces empty output under padding {:?}",
                self.padding
            )));
        }
        Ok((oh - 2 * self.padding.0, ow - 2 * self.padding.1))
    }

    /// Forward weights: out_channels x in_channels x kh x kw.
    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1]
    }

    /// Transposed weights: in_channels x out_channels x kh x kw.
    pub fn transpose_weight_shape(&self) -> [usize; 4] {
        [self.in_channels, self.out_channels, self.kernel.0, self.kernel.1]
    }
}

fn conv_out(size: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    let padded = size + 2 * p;
    if padded < k {
        return None;
    }
    Some((padded - k) / s + 1)
}

/// One layer's weights and bias. Forward convs store weights as
/// out x in x kh x kw, transposed convs as in x out x kh x kw; which one
/// applies is fixed by the call site, not the struct.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> ConvParams<S> {
    pub fn zeros(spec: &ConvSpec) -> Result<Self> {
        Ok(ConvParams {
            weight: Tensor::zeros(&spec.weight_shape())?,
            bias: Tensor::zeros(&[spec.out_channels])?,
        })
    }

    pub fn zeros_transpose(spec: &ConvSpec) -> Result<Self> {
        Ok(ConvParams {
            weight: Tensor::zeros(&spec.transpose_weight_shape())?,
            bias: Tensor::zeros(&[spec.out_channels])?,
        })
    }

    /// Weights N(0, std^2) from the counter RNG, bias zero.
    pub fn init(spec: &ConvSpec, std: f64, seed: u64) -> Result<Self> {
        Ok(ConvParams {
            weight: randn_seeded(&spec.weight_shape(), std, seed)?,
            bias: Tensor::zeros(&[spec.out_channels])?,
        })
    }

    pub fn init_transpose(spec: &ConvSpec, std: f64, seed: u64) -> Result<Self> {
        Ok(ConvParams {
            weight: randn_seeded(&spec.transpose_weight_shape(), std, seed)?,
            bias: Tensor::zeros(&[spec.out_channels])?,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ConvParams { weight: self.weight.zeros_like(), bias: self.bias.zeros_like() }
    }
}

/// Gradients produced by a conv backward pass.
#[derive(Debug, Clone)]
pub struct ConvGrads<S> {
    pub input: Tensor<S>,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

/// Gather image patches into columns.
/// cols[(c*kh + dy)*kw + dx, gy*gw + gx] = src[c, gy*sh + dy - ph, gx*sw + dx - pw],
/// zero where the source index leaves the image. `src` is one sample,
/// c x h x w row-major; the grid (gh, gw) indexes patch positions.
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col<S: Scalar>(
    src: &[S],
    c: usize,
    h: usize,
    w: usize,
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    (ph, pw): (usize, usize),
    (gh, gw): (usize, usize),
    cols: &mut [S],
) {
    debug_assert_eq!(src.len(), c * h * w);
    debug_assert_eq!(cols.len(), c * kh * kw * gh * gw);
    cols.fill(S::zero());
    for ci in 0..c {
        for dy in 0..kh {
            for dx in 0..kw {
                let row_base = (((ci * kh) + dy) * kw + dx) * gh * gw;
                let (glo, ghi) = grid_range(w, kw, sw, pw, dx, gw);
                if glo > ghi {
                    continue;
                }
                for gy in 0..gh {
                    let iy = (gy * sh + dy) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = row_base + gy * gw;
                    let src_row = (ci * h + iy as usize) * w;
                    if sw == 1 {
                        let ix0 = glo + dx - pw;
                        cols[dst + glo..dst + ghi + 1]
                            .copy_from_slice(&src[src_row + ix0..src_row + ix0 + (ghi - glo + 1)]);
                    } else {
                        for gx in glo..=ghi {
                            let ix = gx * sw + dx - pw;
                            cols[dst + gx] = src[src_row + ix];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add columns back onto an image: the exact adjoint of [`im2col`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im<S: Scalar>(
    cols: &[S],
    c: usize,
    h: usize,
    w: usize,
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    (ph, pw): (usize, usize),
    (gh, gw): (usize, usize),
    dst: &mut [S],
) {
    debug_assert_eq!(dst.len(), c * h * w);
    debug_assert_eq!(cols.len(), c * kh * kw * gh * gw);
    for ci in 0..c {
        for dy in 0..kh {
            for dx in 0..kw {
                let row_base = (((ci * kh) + dy) * kw + dx) * gh * gw;
                let (glo, ghi) = grid_range(w, kw, sw, pw, dx, gw);
                if glo > ghi {
                    continue;
                }
                for gy in 0..gh {
                    let iy = (gy * sh + dy) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = row_base + gy * gw;
                    let dst_row = (ci * h + iy as usize) * w;
                    for gx in glo..=ghi {
                        let ix = gx * sw + dx - pw;
                        dst[dst_row + ix] = dst[dst_row + ix] + cols[src + gx];
                    }
                }
            }
        }
    }
}

/// Inclusive grid-column range where gx*sw + dx - pw stays inside [0, w).
fn grid_range(w: usize, _kw: usize, sw: usize, pw: usize, dx: usize, gw: usize) -> (usize, usize) {
    let lo = if pw > dx { (pw - dx).div_ceil(sw) } else { 0 };
    let hi_num = w as isize - 1 + pw as isize - dx as isize;
    if hi_num < 0 || lo >= gw {
        return (1, 0);
    }
    let hi = ((hi_num as usize) / sw).min(gw - 1);
    (lo, hi)
}

fn check_conv_input<S: Scalar>(
    x: &Tensor<S>,
    p: &ConvParams<S>,
    spec: &ConvSpec,
    weight_shape: [usize; 4],
) -> Result<(usize, usize, usize)> {
    spec.validate()?;
    let (n, c, h, w) = x.dims4()?;
    if c != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "conv: input has {c} channels, spec expects {}",
            spec.in_channels
        )));
    }
    if p.weight.shape() != weight_shape {
        return Err(Error::ShapeMismatch(format!(
            "conv: weight shape {:?} does not match spec {:?}",
            p.weight.shape(),
            weight_shape
        )));
    }
    if p.bias.shape() != [spec.out_channels] {
        return Err(Error::ShapeMismatch(format!(
            "conv: bias shape {:?}, spec expects [{}]",
            p.bias.shape(),
            spec.out_channels
        )));
    }
    let _ = n;
    Ok((n, h, w))
}

/// Standard convolution with zero padding.
pub fn conv2d<S: Scalar>(x: &Tensor<S>, p: &ConvParams<S>, spec: &ConvSpec) -> Result<Tensor<S>> {
    let (n, h, w) = check_conv_input(x, p, spec, spec.weight_shape())?;
    let (oh, ow) = spec.out_dims(h, w)?;
    let (kh, kw) = spec.kernel;
    let k_col = spec.in_channels * kh * kw;
    let pix = oh * ow;
    let mut cols = vec![S::zero(); k_col * pix];
    let mut out = Tensor::zeros(&[n, spec.out_channels, oh, ow])?;
    let in_plane = spec.in_channels * h * w;
    let out_plane = spec.out_channels * pix;
    for ni in 0..n {
        im2col(
            &x.data()[ni * in_plane..(ni + 1) * in_plane],
            spec.in_channels,
            h,
            w,
            spec.kernel,
            spec.stride,
            spec.padding,
            (oh, ow),
            &mut cols,
        );
        let out_n = &mut out.data_mut()[ni * out_plane..(ni + 1) * out_plane];
        S::gemm(
            spec.out_channels,
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
        for oc in 0..spec.out_channels {
            let b = p.bias.data()[oc];
            for v in &mut out_n[oc * pix..(oc + 1) * pix] {
                *v = *v + b;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weights and bias.
pub fn conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    p: &ConvParams<S>,
    spec: &ConvSpec,
    grad_out: &Tensor<S>,
) -> Result<ConvGrads<S>> {
    let (n, h, w) = check_conv_input(x, p, spec, spec.weight_shape())?;
    let (oh, ow) = spec.out_dims(h, w)?;
    if grad_out.shape() != [n, spec.out_channels, oh, ow] {
        return Err(Error::ShapeMismatch(format!(
            "conv backward: grad shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, spec.out_channels, oh, ow]
        )));
    }
    let (kh, kw) = spec.kernel;
    let k_col = spec.in_channels * kh * kw;
    let pix = oh * ow;
    let mut cols = vec![S::zero(); k_col * pix];
    let mut grad_cols = vec![S::zero(); k_col * pix];
    let mut grads = ConvGrads {
        input: x.zeros_like(),
        weight: p.weight.zeros_like(),
        bias: p.bias.zeros_like(),
    };
    let in_plane = spec.in_channels * h * w;
    let out_plane = spec.out_channels * pix;
    for ni in 0..n {
        let x_n = &x.data()[ni * in_plane..(ni + 1) * in_plane];
        let g_n = &grad_out.data()[ni * out_plane..(ni + 1) * out_plane];
        im2col(x_n, spec.in_channels, h, w, spec.kernel, spec.stride, spec.padding, (oh, ow), &mut cols);
        // grad_w += g_n * cols^T, computed as grad_w^T += cols * g_n^T so the
        // large cols matrix is traversed contiguously (the transposed-view
        // orientation makes the GEMM pack it with pix-strided reads).
        S::gemm(
            k_col,
            pix,
            spec.out_channels,
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
            spec.out_channels,
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
        col2im(
            &grad_cols,
            spec.in_channels,
            h,
            w,
            spec.kernel,
            spec.stride,
            spec.padding,
            (oh, ow),
            &mut grads.input.data_mut()[ni * in_plane..(ni + 1) * in_plane],
        );
        for oc in 0..spec.out_channels {
            let mut s = S::zero();
            for &g in &g_n[oc * pix..(oc + 1) * pix] {
                s = s + g;
            }
            grads.bias.data_mut()[oc] = grads.bias.data()[oc] + s;
        }
    }
    Ok(grads)
}

/// Transposed convolution (fractionally strided); kernel 4, stride 2, pad 1
/// doubles each spatial dim exactly.
pub fn conv_transpose2d<S: Scalar>(
    x: &Tensor<S>,
    p: &ConvParams<S>,
    spec: &ConvSpec,
) -> Result<Tensor<S>> {
    let (n, h, w) = check_conv_input(x, p, spec, spec.transpose_weight_shape())?;
    let (oh, ow) = spec.transpose_out_dims(h, w)?;
    let (kh, kw) = spec.kernel;
    let k_up = spec.out_channels * kh * kw;
    let in_pix = h * w;
    let mut cols = vec![S::zero(); k_up * in_pix];
    let mut out = Tensor::zeros(&[n, spec.out_channels, oh, ow])?;
    let in_plane = spec.in_channels * in_pix;
    let out_plane = spec.out_channels * oh * ow;
    for ni in 0..n {
        // cols = W' * x_n where W'[(oc,dy,dx), ic] = weight[ic, oc, dy, dx]
        S::gemm(
            k_up,
            spec.in_channels,
            in_pix,
            S::one(),
            p.weight.data(),
            1,
            k_up as isize,
            &x.data()[ni * in_plane..(ni + 1) * in_plane],
            in_pix as isize,
            1,
            S::zero(),
            &mut cols,
            in_pix as isize,
            1,
        );
        let out_n = &mut out.data_mut()[ni * out_plane..(ni + 1) * out_plane];
        col2im(&cols, spec.out_channels, oh, ow, spec.kernel, spec.stride, spec.padding, (h, w), out_n);
        let o_pix = oh * ow;
        for oc in 0..spec.out_channels {
            let b = p.bias.data()[oc];
            for v in &mut out_n[oc * o_pix..(oc + 1) * o_pix] {
                *v = *v + b;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv_transpose2d`].
pub fn conv_transpose2d_backward<S: Scalar>(
    x: &Tensor<S>,
    p: &ConvParams<S>,
    spec: &ConvSpec,
    grad_out: &Tensor<S>,
) -> Result<ConvGrads<S>> {
    let (n, h, w) = check_conv_input(x, p, spec, spec.transpose_weight_shape())?;
    let (oh, ow) = spec.transpose_out_dims(h, w)?;
    if grad_out.shape() != [n, spec.out_channels, oh, ow] {
        return Err(Error::ShapeMismatch(format!(
            "transposed conv backward: grad shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, spec.out_channels, oh, ow]
        )));
    }
    let (kh, kw) = spec.kernel;
    let k_up = spec.out_channels * kh * kw;
    let in_pix = h * w;
    let mut g_cols = vec![S::zero(); k_up * in_pix];
    let mut grads = ConvGrads {
        input: x.zeros_like(),
        weight: p.weight.zeros_like(),
        bias: p.bias.zeros_like(),
    };
    let in_plane = spec.in_channels * in_pix;
    let out_plane = spec.out_channels * oh * ow;
    let o_pix = oh * ow;
    for ni in 0..n {
        let g_n = &grad_out.data()[ni * out_plane..(ni + 1) * out_plane];
        im2col(g_n, spec.out_channels, oh, ow, spec.kernel, spec.stride, spec.padding, (h, w), &mut g_cols);
        // grad_x = W * g_cols with W viewed as [ic x (oc*kh*kw)]
        S::gemm(
            spec.in_channels,
            k_up,
            in_pix,
            S::one(),
            p.weight.data(),
            k_up as isize,
            1,
            &g_cols,
            in_pix as isize,
            1,
            S::zero(),
            &mut grads.input.data_mut()[ni * in_plane..(ni + 1) * in_plane],
            in_pix as isize,
            1,
        );
        // grad_w += x_n * g_cols^T, computed as grad_w^T += g_cols * x_n^T so
        // the large g_cols matrix is traversed contiguously.
        S::gemm(
            k_up,
            in_pix,
            spec.in_channels,
            S::one(),
            &g_cols,
            in_pix as isize,
            1,
            &x.data()[ni * in_plane..(ni + 1) * in_plane],
            1,
            in_pix as isize,
            S::one(),
            grads.weight.data_mut(),
            1,
            k_up as isize,
        );
        for oc in 0..spec.out_channels {
            let mut s = S::zero();
            for &g in &g_n[oc * o_pix..(oc + 1) * o_pix] {
                s = s + g;
            }
            grads.bias.data_mut()[oc] = grads.bias.data()[oc] + s;
        }
    }
    Ok(grads)
}
