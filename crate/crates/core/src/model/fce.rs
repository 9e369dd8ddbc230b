//! Feature-compression encoder: eight 3x3 convolutions with ReLU, pooled
//! 2x2/stride-2 after the second, fourth, and sixth. The post-activation maps
//! of convs 2, 4, 6, and 8 are exported as a four-level pyramid (full, half,
//! quarter, eighth resolution) for the decoder's skip connections.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::conv::{conv2d, conv2d_backward, ConvParams, ConvSpec};
use crate::nn::pool::{pool2, pool2_backward};
use crate::scalar::Scalar;
use crate::tensor::{relu, relu_backward, Tensor};

pub fn fce_specs(cfg: &ModelConfig) -> Vec<ConvSpec> {
    let mut in_c = cfg.input_channels;
    cfg.fce_channels
        .iter()
        .map(|&out| {
            let spec = ConvSpec::k3s1p1(in_c, out);
            in_c = out;
            spec
        })
        .collect()
}

/// Multi-resolution encoder output. `full` keeps the input resolution; each
/// later level halves it.
#[derive(Debug, Clone)]
pub struct FcePyramid<S> {
    pub full: Tensor<S>,
    pub half: Tensor<S>,
    pub quarter: Tensor<S>,
    pub eighth: Tensor<S>,
}

impl<S: Scalar> FcePyramid<S> {
    pub fn zeros_like(&self) -> Self {
        FcePyramid {
            full: self.full.zeros_like(),
            half: self.half.zeros_like(),
            quarter: self.quarter.zeros_like(),
            eighth: self.eighth.zeros_like(),
        }
    }
}

/// Forward state needed by the backward pass: the input of every conv, every
/// pre-activation, and the pyramid taps (which double as pooling inputs).
#[derive(Debug, Clone)]
pub struct FceCache<S> {
    pub conv_inputs: Vec<Tensor<S>>,
    pub pre_relu: Vec<Tensor<S>>,
    pub taps: FcePyramid<S>,
}

pub fn fce_forward<S: Scalar>(
    x: &Tensor<S>,
    params: &[ConvParams<S>],
    cfg: &ModelConfig,
) -> Result<(FcePyramid<S>, FceCache<S>)> {
    let (_, c, h, w) = x.dims4()?;
    if c != cfg.input_channels {
        return Err(Error::ShapeMismatch(format!(
            "encoder expects {} input channels, got {c}",
            cfg.input_channels
        )));
    }
    if h % 8 != 0 || w % 8 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "encoder input must be a multiple of 8 on each side, got {h}x{w}"
        )));
    }
    let min = cfg.min_side();
    if h < min || w < min {
        return Err(Error::ShapeMismatch(format!(
            "encoder input must be at least {min}x{min}, got {h}x{w}"
        )));
    }
    let specs = fce_specs(cfg);
    if params.len() != specs.len() {
        return Err(Error::InvalidParam(format!(
            "encoder needs {} conv layers, got {}",
            specs.len(),
            params.len()
        )));
    }

    let mut conv_inputs = Vec::with_capacity(8);
    let mut pre_relu = Vec::with_capacity(8);
    let mut taps: Vec<Tensor<S>> = Vec::with_capacity(4);
    let mut cur = x.clone();
    for i in 0..8 {
        conv_inputs.push(cur.clone());
        let pre = conv2d(&cur, &params[i], &specs[i])?;
        cur = relu(&pre);
        pre_relu.push(pre);
        if i % 2 == 1 {
            taps.push(cur.clone());
            if i < 7 {
                cur = pool2(&cur, cfg.pooling)?;
            }
        }
    }
    let eighth = taps.pop().unwrap();
    let quarter = taps.pop().unwrap();
    let half = taps.pop().unwrap();
    let full = taps.pop().unwrap();
    let pyramid = FcePyramid { full, half, quarter, eighth };
    let cache = FceCache { conv_inputs, pre_relu, taps: pyramid.clone() };
    Ok((pyramid, cache))
}

/// Gradients arrive for all four pyramid levels (every level feeds the
/// decoder). Returns the input gradient and per-conv parameter gradients.
pub fn fce_backward<S: Scalar>(
    params: &[ConvParams<S>],
    cfg: &ModelConfig,
    cache: &FceCache<S>,
    grads: &FcePyramid<S>,
) -> Result<(Tensor<S>, Vec<ConvParams<S>>)> {
    let specs = fce_specs(cfg);
    let mut gparams: Vec<ConvParams<S>> = params.iter().map(|p| p.zeros_like()).collect();
    let tap_inputs = [&cache.taps.full, &cache.taps.half, &cache.taps.quarter];
    let tap_grads = [&grads.full, &grads.half, &grads.quarter];

    let mut g = grads.eighth.clone();
    for i in (0..8).rev() {
        let g_pre = relu_backward(&cache.pre_relu[i], &g)?;
        let cg = conv2d_backward(&cache.conv_inputs[i], &params[i], &specs[i], &g_pre)?;
        gparams[i] = ConvParams { weight: cg.weight, bias: cg.bias };
        g = cg.input;
        if i > 0 && i % 2 == 0 {
            // conv_inputs[i] is the pooled tap i/2-1: route through the pool,
            // then add the skip gradient that feeds the tap directly.
            let t = i / 2 - 1;
            g = pool2_backward(tap_inputs[t], &g, cfg.pooling)?;
            g.add_into(tap_grads[t])?;
        }
    }
    Ok((g, gparams))
}

/// Pack all four pyramid levels into one flat tensor (for gradcheck, whose
/// forward closures return a single tensor).
#[cfg(test)]
pub(crate) fn flatten_pyramid<S: Scalar>(pyr: &FcePyramid<S>) -> Result<Tensor<S>> {
    let mut data = Vec::new();
    for t in [&pyr.full, &pyr.half, &pyr.quarter, &pyr.eighth] {
        data.extend_from_slice(t.data());
    }
    let len = data.len();
    Tensor::from_vec(&[len], data)
}

#[cfg(test)]
pub(crate) fn split_like_pyramid<S: Scalar>(
    flat: &Tensor<S>,
    like: &FcePyramid<S>,
) -> Result<FcePyramid<S>> {
    let mut at = 0usize;
    let mut take = |t: &Tensor<S>| -> Result<Tensor<S>> {
        let part = flat.data()[at..at + t.len()].to_vec();
        at += t.len();
        Tensor::from_vec(t.shape(), part)
    };
    Ok(FcePyramid {
        full: take(&like.full)?,
        half: take(&like.half)?,
        quarter: take(&like.quarter)?,
        eighth: take(&like.eighth)?,
    })
}
