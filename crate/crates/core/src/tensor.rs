use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor. Shapes are validated at construction: no empty
/// shape, no zero dims, data length equals the shape product.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

fn validate_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape("shape must have at least one dimension".into()));
    }
    let mut len = 1usize;
    for (i, &d) in shape.iter().enumerate() {
        if d == 0 {
            return Err(Error::InvalidShape(format!("dimension {i} is zero in {shape:?}")));
        }
        len = len
            .checked_mul(d)
            .ok_or_else(|| Error::InvalidShape(format!("shape {shape:?} overflows usize")))?;
    }
    Ok(len)
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = validate_shape(shape)?;
        Ok(Tensor { shape: shape.to_vec(), data: vec![S::zero(); len] })
    }

    pub fn filled(shape: &[usize], value: S) -> Result<Self> {
        let len = validate_shape(shape)?;
        Ok(Tensor { shape: shape.to_vec(), data: vec![value; len] })
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let len = validate_shape(shape)?;
        if data.len() != len {
            return Err(Error::InvalidShape(format!(
                "data length {} does not match shape {:?} (expects {})",
                data.len(),
                shape,
                len
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Result<Self> {
        let len = validate_shape(shape)?;
        Ok(Tensor { shape: shape.to_vec(), data: (0..len).map(&mut f).collect() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // zero dims are rejected at construction
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn zeros_like(&self) -> Self {
        Tensor { shape: self.shape.clone(), data: vec![S::zero(); self.data.len()] }
    }

    /// Interpret as N x C x H x W.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            other => Err(Error::InvalidShape(format!("expected a 4-d tensor, got {other:?}"))),
        }
    }

    /// Interpret as C x H x W.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(Error::InvalidShape(format!("expected a 3-d tensor, got {other:?}"))),
        }
    }

    /// Interpret as rows x features.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, f] => Ok((r, f)),
            other => Err(Error::InvalidShape(format!("expected a 2-d tensor, got {other:?}"))),
        }
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let len = validate_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} ({}) to {:?} ({})",
                self.shape,
                self.data.len(),
                shape,
                len
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Elementwise accumulate; shapes must match exactly.
    pub fn add_into(&mut self, other: &Tensor<S>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (d, s) in self.data.iter_mut().zip(&other.data) {
            *d += *s;
        }
        Ok(())
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|x| !x.is_finite())
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        match self.first_non_finite() {
            None => Ok(()),
            Some(i) => Err(Error::GradCheckFailure(format!(
                "{context}: non-finite value at flat index {i} of shape {:?}",
                self.shape
            ))),
        }
    }

    /// Flat index into an N x C x H x W tensor.
    #[inline]
    pub fn idx4(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 4);
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    /// Convert element type (f32 <-> f64 promotion/rounding through f64).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| T::of_f64(x.to_f64_lossy())).collect(),
        }
    }
}

/// A parameter or activation tensor paired with its gradient; the two shapes
/// always agree.
#[derive(Debug, Clone)]
pub struct GradPair<S> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
}

impl<S: Scalar> GradPair<S> {
    pub fn new(value: Tensor<S>) -> Self {
        let grad = value.zeros_like();
        GradPair { value, grad }
    }

    pub fn with_grad(value: Tensor<S>, grad: Tensor<S>) -> Result<Self> {
        if value.shape() != grad.shape() {
            return Err(Error::ShapeMismatch(format!(
                "gradient shape {:?} does not match value shape {:?}",
                grad.shape(),
                value.shape()
            )));
        }
        Ok(GradPair { value, grad })
    }
}

/// Elementwise max(x, 0).
pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Routes grad_out where the forward input was strictly positive.
pub fn relu_backward<S: Scalar>(x: &Tensor<S>, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch(format!(
            "relu backward: input {:?} vs grad {:?}",
            x.shape(),
            grad_out.shape()
        )));
    }
    let mut g = grad_out.clone();
    for (gi, &xi) in g.data_mut().iter_mut().zip(x.data().iter()) {
        if xi <= S::zero() {
            *gi = S::zero();
        }
    }
    Ok(g)
}

/// Elementwise max(x, alpha * x), the discriminator's activation.
pub fn leaky_relu<S: Scalar>(x: &Tensor<S>, alpha: S) -> Tensor<S> {
    x.map(|v| if v > S::zero() { v } else { alpha * v })
}

pub fn leaky_relu_backward<S: Scalar>(x: &Tensor<S>, alpha: S, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch(format!(
            "leaky relu backward: input {:?} vs grad {:?}",
            x.shape(),
            grad_out.shape()
        )));
    }
    let mut g = grad_out.clone();
    for (gi, &xi) in g.data_mut().iter_mut().zip(x.data().iter()) {
        if xi <= S::zero() {
            *gi = *gi * alpha;
        }
    }
    Ok(g)
}

/// Concatenate N x C_i x H x W tensors along the channel axis.
pub fn concat_channels<S: Scalar>(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
    if parts.is_empty() {
        return Err(Error::InvalidParam("concat_channels: no inputs".into()));
    }
    let (n, _, h, w) = parts[0].dims4()?;
    let mut total_c = 0usize;
    for t in parts {
        let (tn, tc, th, tw) = t.dims4()?;
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::ShapeMismatch(format!(
                "concat_channels: {:?} does not align with {:?} on batch/spatial dims",
                t.shape(),
                parts[0].shape()
            )));
        }
        total_c += tc;
    }
    let mut out = Tensor::zeros(&[n, total_c, h, w])?;
    let plane = h * w;
    let out_data = out.data_mut();
    for bi in 0..n {
        let mut c_base = 0usize;
        for t in parts {
            let tc = t.shape()[1];
            let src = &t.data()[bi * tc * plane..(bi + 1) * tc * plane];
            let dst_start = (bi * total_c + c_base) * plane;
            out_data[dst_start..dst_start + tc * plane].copy_from_slice(src);
            c_base += tc;
        }
    }
    Ok(out)
}

/// Split a channel-concat gradient back into per-part gradients.
pub fn concat_channels_backward<S: Scalar>(
    channel_counts: &[usize],
    grad_out: &Tensor<S>,
) -> Result<Vec<Tensor<S>>> {
    let (n, c, h, w) = grad_out.dims4()?;
    let sum: usize = channel_counts.iter().sum();
    if sum != c {
        return Err(Error::ShapeMismatch(format!(
            "concat backward: channel counts {channel_counts:?} sum to {sum}, gradient has {c}"
        )));
    }
    let plane = h * w;
    let mut grads = Vec::with_capacity(channel_counts.len());
    for &cc in channel_counts {
        grads.push(Tensor::zeros(&[n, cc, h, w])?);
    }
    for bi in 0..n {
        let mut c_base = 0usize;
        for (gi, &cc) in channel_counts.iter().enumerate() {
            let src_start = (bi * c + c_base) * plane;
            let dst_start = bi * cc * plane;
            grads[gi].data_mut()[dst_start..dst_start + cc * plane]
                .copy_from_slice(&grad_out.data()[src_start..src_start + cc * plane]);
            c_base += cc;
        }
    }
    Ok(grads)
}
