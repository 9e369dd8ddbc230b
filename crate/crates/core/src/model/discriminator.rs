//! Patch discriminator over single-channel sketches.
//!
//! Five 4x4 convolutions: three stride-2 (widths base, 2*base, 4*base), one
//! stride-1 at 8*base, and a stride-1 projection to one logit map. Instance
//! normalization (no affine) after convs 2-4, LeakyReLU(0.2) after convs 1-4.
//! Each output cell scores a receptive field of the input, so the result is
//! a patch verdict map, not a single scalar.

use crate::error::Result;
use crate::model::params::DiscParams;
use crate::model::ModelConfig;
use crate::nn::conv::{conv2d, conv2d_backward, ConvParams, ConvSpec};
use crate::nn::norm::{instance_norm, instance_norm_backward, INSTANCE_NORM_EPS};
use crate::scalar::Scalar;
use crate::tensor::{leaky_relu, leaky_relu_backward, Tensor};

pub const DISC_LEAK: f64 = 0.2;

pub fn disc_specs(cfg: &ModelConfig) -> Vec<ConvSpec> {
    let b = cfg.disc_base;
    vec![
        ConvSpec::k4s2p1(1, b),
        ConvSpec::k4s2p1(b, 2 * b),
        ConvSpec::k4s2p1(2 * b, 4 * b),
        ConvSpec::k4s1p1(4 * b, 8 * b),
        ConvSpec::k4s1p1(8 * b, 1),
    ]
}

/// Which layers get instance norm (by index).
const NORMED: [bool; 5] = [false, true, true, true, false];
/// Which layers get the leaky activation.
const ACTIVATED: [bool; 5] = [true, true, true, true, false];

#[derive(Debug, Clone)]
pub struct DiscCache<S> {
    /// Input of each conv.
    pub conv_inputs: Vec<Tensor<S>>,
    /// Conv outputs of the normalized layers, pre-norm.
    pub pre_norm: Vec<Option<Tensor<S>>>,
    /// The tensor entering each activation (post-norm where normalized).
    pub pre_act: Vec<Option<Tensor<S>>>,
}

/// Smallest input that still yields a 1x1 verdict map. Anything smaller runs
/// out of pixels in the stride-1 tail and is rejected by the conv geometry.
pub const DISC_MIN_SIDE: usize = 24;

pub fn disc_forward<S: Scalar>(
    x: &Tensor<S>,
    params: &DiscParams<S>,
    cfg: &ModelConfig,
) -> Result<(Tensor<S>, DiscCache<S>)> {
    let specs = disc_specs(cfg);
    let alpha = S::of_f64(DISC_LEAK);
    let mut cache = DiscCache {
        conv_inputs: Vec::with_capacity(5),
        pre_norm: Vec::with_capacity(5),
        pre_act: Vec::with_capacity(5),
    };
    let mut cur = x.clone();
    for i in 0..5 {
        cache.conv_inputs.push(cur.clone());
        let mut t = conv2d(&cur, &params.convs[i], &specs[i])?;
        if NORMED[i] {
            cache.pre_norm.push(Some(t.clone()));
            t = instance_norm(&t, INSTANCE_NORM_EPS)?;
        } else {
            cache.pre_norm.push(None);
        }
        if ACTIVATED[i] {
            cache.pre_act.push(Some(t.clone()));
            t = leaky_relu(&t, alpha);
        } else {
            cache.pre_act.push(None);
        }
        cur = t;
    }
    Ok((cur, cache))
}

pub fn disc_backward<S: Scalar>(
    params: &DiscParams<S>,
    cfg: &ModelConfig,
    cache: &DiscCache<S>,
    grad_out: &Tensor<S>,
) -> Result<(Tensor<S>, DiscParams<S>)> {
    let specs = disc_specs(cfg);
    let alpha = S::of_f64(DISC_LEAK);
    let mut gconvs: Vec<ConvParams<S>> = params.convs.iter().map(|p| p.zeros_like()).collect();
    let mut g = grad_out.clone();
    for i in (0..5).rev() {
        if let Some(pre) = &cache.pre_act[i] {
            g = leaky_relu_backward(pre, alpha, &g)?;
        }
        if let Some(pre) = &cache.pre_norm[i] {
            g = instance_norm_backward(pre, INSTANCE_NORM_EPS, &g)?;
        }
        let cg = conv2d_backward(&cache.conv_inputs[i], &params.convs[i], &specs[i], &g)?;
        gconvs[i] = ConvParams { weight: cg.weight, bias: cg.bias };
        g = cg.input;
    }
    Ok((g, DiscParams { convs: gconvs }))
}
