//! Convolution with a dynamically generated, region-specific filter. The
//! filter is data (produced by a weight generator from the region content),
//! not a trainable parameter; gradients flow through it back into the
//! generator. No bias, stride 1, zero padding local to the region.

use crate::error::{Error, Result};
use crate::nn::conv::{col2im, im2col};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A generated filter, laid out in_channels x kh x kw x out_channels: the
/// row-major reshape of the generator's final layer output.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFilter<S> {
    tensor: Tensor<S>,
}

impl<S: Scalar> GeneratedFilter<S> {
    pub fn new(tensor: Tensor<S>) -> Result<Self> {
        if tensor.shape().len() != 4 {
            return Err(Error::InvalidShape(format!(
                "generated filter must be in x kh x kw x out, got {:?}",
                tensor.shape()
            )));
        }
        Ok(GeneratedFilter { tensor })
    }

    pub fn from_flat(flat: &Tensor<S>, in_c: usize, kernel: (usize, usize), out_c: usize) -> Result<Self> {
        GeneratedFilter::new(flat.reshape(&[in_c, kernel.0, kernel.1, out_c])?)
    }

    pub fn in_channels(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.tensor.shape()[1], self.tensor.shape()[2])
    }

    pub fn out_channels(&self) -> usize {
        self.tensor.shape()[3]
    }

    pub fn tensor(&self) -> &Tensor<S> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<S> {
        self.tensor
    }
}

fn check_adaptive<S: Scalar>(
    region: &Tensor<S>,
    filter: &GeneratedFilter<S>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (c, h, w) = region.dims3()?;
    if filter.in_channels() != c {
        return Err(Error::ShapeMismatch(format!(
            "adaptive conv: region has {c} channels, filter expects {}",
            filter.in_channels()
        )));
    }
    let (kh, kw) = filter.kernel();
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "adaptive conv: kernel must be odd, got {kh}x{kw}"
        )));
    }
    Ok((c, h, w, kh, kw, filter.out_channels()))
}

/// Apply a generated filter to its region: out_c x h x w from c x h x w.
pub fn adaptive_conv<S: Scalar>(
    region: &Tensor<S>,
    filter: &GeneratedFilter<S>,
) -> Result<Tensor<S>> {
    let (c, h, w, kh, kw, out_c) = check_adaptive(region, filter)?;
    let k_col = c * kh * kw;
    let pix = h * w;
    let mut cols = vec![S::zero(); k_col * pix];
    im2col(region.data(), c, h, w, (kh, kw), (1, 1), (kh / 2, kw / 2), (h, w), &mut cols);
    let mut out = Tensor::zeros(&[out_c, h, w])?;
    // filter viewed as [k_col x out_c]; out = filter^T * cols.
    S::gemm(
        out_c,
        k_col,
        pix,
        S::one(),
        filter.tensor().data(),
        1,
        out_c as isize,
        &cols,
        pix as isize,
        1,
        S::zero(),
        out.data_mut(),
        pix as isize,
        1,
    );
    Ok(out)
}

/// Gradients of [`adaptive_conv`] with respect to the region and the filter.
pub fn adaptive_conv_backward<S: Scalar>(
    region: &Tensor<S>,
    filter: &GeneratedFilter<S>,
    grad_out: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let (c, h, w, kh, kw, out_c) = check_adaptive(region, filter)?;
    if grad_out.shape() != [out_c, h, w] {
        return Err(Error::ShapeMismatch(format!(
            "adaptive conv backward: grad shape {:?}, expected {:?}",
            grad_out.shape(),
            [out_c, h, w]
        )));
    }
    let k_col = c * kh * kw;
    let pix = h * w;
    let mut cols = vec![S::zero(); k_col * pix];
    im2col(region.data(), c, h, w, (kh, kw), (1, 1), (kh / 2, kw / 2), (h, w), &mut cols);

    // grad_filter[k, oc] = sum_pix cols[k, pix] * g[oc, pix]
    let mut grad_filter = filter.tensor().zeros_like();
    S::gemm(
        k_col,
        pix,
        out_c,
        S::one(),
        &cols,
        pix as isize,
        1,
        grad_out.data(),
        1,
        pix as isize,
        S::zero(),
        grad_filter.data_mut(),
        out_c as isize,
        1,
    );

    // grad_cols = filter * g, then scatter back onto the region.
    let mut grad_cols = vec![S::zero(); k_col * pix];
    S::gemm(
        k_col,
        out_c,
        pix,
        S::one(),
        filter.tensor().data(),
        out_c as isize,
        1,
        grad_out.data(),
        pix as isize,
        1,
        S::zero(),
        &mut grad_cols,
        pix as isize,
        1,
    );
    let mut grad_region = region.zeros_like();
    col2im(
        &grad_cols,
        c,
        h,
        w,
        (kh, kw),
        (1, 1),
        (kh / 2, kw / 2),
        (h, w),
        grad_region.data_mut(),
    );
    Ok((grad_region, grad_filter))
}
