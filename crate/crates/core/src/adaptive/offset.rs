//! Per-pixel sampling offsets for the deformable convolution.
//!
//! An offset field for a kh x kw kernel has 2*kh*kw channels: taps are
//! enumerated row-major over the kernel grid, and each tap k owns channel
//! pair (2k, 2k+1) = (delta-y, delta-x), in that order.

use crate::error::{Error, Result};
use crate::nn::conv::ConvSpec;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField<S> {
    tensor: Tensor<S>,
    kernel: (usize, usize),
}

impl<S: Scalar> OffsetField<S> {
    pub fn new(tensor: Tensor<S>, kernel: (usize, usize)) -> Result<Self> {
        let (_, c, _, _) = tensor.dims4()?;
        let expect = 2 * kernel.0 * kernel.1;
        if c != expect {
            return Err(Error::ShapeMismatch(format!(
                "offset field for a {}x{} kernel needs {expect} channels, got {c}",
                kernel.0, kernel.1
            )));
        }
        Ok(OffsetField { tensor, kernel })
    }

    pub fn zeros(n: usize, kernel: (usize, usize), h: usize, w: usize) -> Result<Self> {
        Ok(OffsetField { tensor: Tensor::zeros(&[n, 2 * kernel.0 * kernel.1, h, w])?, kernel })
    }

    pub fn kernel(&self) -> (usize, usize) {
        self.kernel
    }

    pub fn tensor(&self) -> &Tensor<S> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<S> {
        self.tensor
    }

    /// Vertical offset of tap k at pixel (y, x).
    #[inline]
    pub fn dy(&self, n: usize, k: usize, y: usize, x: usize) -> S {
        self.tensor.data()[self.tensor.idx4(n, 2 * k, y, x)]
    }

    /// Horizontal offset of tap k at pixel (y, x).
    #[inline]
    pub fn dx(&self, n: usize, k: usize, y: usize, x: usize) -> S {
        self.tensor.data()[self.tensor.idx4(n, 2 * k + 1, y, x)]
    }
}

/// Spec of the 3x3 stride-1 pad-1 convolution that predicts an offset field
/// for a kernel from the layer's own input feature map.
pub fn offset_conv_spec(feature_channels: usize, kernel: (usize, usize)) -> ConvSpec {
    ConvSpec::k3s1p1(feature_channels, 2 * kernel.0 * kernel.1)
}
