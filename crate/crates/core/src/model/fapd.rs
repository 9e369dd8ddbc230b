//! Feature-adaptive perception decoder.
//!
//! Upsamples the encoder's eighth-resolution map back to full resolution,
//! concatenating the matching pyramid level after each upsampling step
//! (decoder output first, then the skip feature). The dc* slots run
//! deformable convolutions whose offsets come from a dedicated 3x3 conv over
//! the slot's own input; the standard variant swaps in plain 3x3 convs. No
//! activation anywhere in the decoder.

use crate::adaptive::deform::{deform_conv2d, deform_conv2d_backward};
use crate::adaptive::offset::{offset_conv_spec, OffsetField};
use crate::error::{Error, Result};
use crate::model::fce::FcePyramid;
use crate::model::params::{DecoderLayer, DeformLayer, FapdParams};
use crate::model::ModelConfig;
use crate::nn::conv::{
    conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward, ConvParams, ConvSpec,
};
use crate::scalar::Scalar;
use crate::tensor::{concat_channels, concat_channels_backward, Tensor};

/// Convolution geometry of the seven decoder layers.
#[derive(Debug, Clone)]
pub struct FapdSpecs {
    pub dc1: ConvSpec,
    pub tc1: ConvSpec,
    pub dc2: ConvSpec,
    pub tc2: ConvSpec,
    pub tc3: ConvSpec,
    pub sc: ConvSpec,
    pub dc3: ConvSpec,
}

impl FapdSpecs {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (full, half, quarter, eighth) =
            (cfg.f_full(), cfg.f_half(), cfg.f_quarter(), cfg.f_eighth());
        FapdSpecs {
            dc1: ConvSpec::k3s1p1(eighth, eighth),
            tc1: ConvSpec::k4s2p1(eighth, quarter),
            dc2: ConvSpec::k3s1p1(2 * quarter, half),
            tc2: ConvSpec::k4s2p1(half, half),
            tc3: ConvSpec::k4s2p1(2 * half, full),
            sc: ConvSpec::k3s1p1(2 * full, full),
            dc3: ConvSpec::k3s1p1(full, full),
        }
    }
}

/// Inputs of every decoder layer plus the offset fields the deformable slots
/// produced (None under the standard variant).
#[derive(Debug, Clone)]
pub struct FapdCache<S> {
    pub dc1_in: Tensor<S>,
    pub dc1_field: Option<OffsetField<S>>,
    pub tc1_in: Tensor<S>,
    pub dc2_in: Tensor<S>,
    pub dc2_field: Option<OffsetField<S>>,
    pub tc2_in: Tensor<S>,
    pub tc3_in: Tensor<S>,
    pub sc_in: Tensor<S>,
    pub dc3_in: Tensor<S>,
    pub dc3_field: Option<OffsetField<S>>,
}

fn decoder_forward<S: Scalar>(
    x: &Tensor<S>,
    layer: &DecoderLayer<S>,
    spec: &ConvSpec,
) -> Result<(Tensor<S>, Option<OffsetField<S>>)> {
    match layer {
        DecoderLayer::Deformable(d) => {
            let off_spec = offset_conv_spec(spec.in_channels, spec.kernel);
            let field = OffsetField::new(conv2d(x, &d.offset, &off_spec)?, spec.kernel)?;
            let out = deform_conv2d(x, &d.conv, &field)?;
            Ok((out, Some(field)))
        }
        DecoderLayer::Standard(c) => Ok((conv2d(x, c, spec)?, None)),
    }
}

fn decoder_backward<S: Scalar>(
    x: &Tensor<S>,
    layer: &DecoderLayer<S>,
    spec: &ConvSpec,
    field: Option<&OffsetField<S>>,
    grad_out: &Tensor<S>,
) -> Result<(Tensor<S>, DecoderLayer<S>)> {
    match (layer, field) {
        (DecoderLayer::Deformable(d), Some(field)) => {
            let off_spec = offset_conv_spec(spec.in_channels, spec.kernel);
            let dg = deform_conv2d_backward(x, &d.conv, field, grad_out)?;
            let og = conv2d_backward(x, &d.offset, &off_spec, &dg.offsets)?;
            let mut gx = dg.input;
            gx.add_into(&og.input)?;
            Ok((
                gx,
                DecoderLayer::Deformable(DeformLayer {
                    offset: ConvParams { weight: og.weight, bias: og.bias },
                    conv: ConvParams { weight: dg.weight, bias: dg.bias },
                }),
            ))
        }
        (DecoderLayer::Standard(c), None) => {
            let cg = conv2d_backward(x, c, spec, grad_out)?;
            Ok((cg.input, DecoderLayer::Standard(ConvParams { weight: cg.weight, bias: cg.bias })))
        }
        _ => Err(Error::InvalidParam(
            "decoder cache does not match the configured variant".into(),
        )),
    }
}

/// Returns the full-resolution decoded map and the cache for backward.
pub fn fapd_forward<S: Scalar>(
    pyr: &FcePyramid<S>,
    params: &FapdParams<S>,
    cfg: &ModelConfig,
) -> Result<(Tensor<S>, FapdCache<S>)> {
    let specs = FapdSpecs::new(cfg);

    let dc1_in = pyr.eighth.clone();
    let (d1, dc1_field) = decoder_forward(&dc1_in, &params.dc1, &specs.dc1)?;
    let u1 = conv_transpose2d(&d1, &params.tc1, &specs.tc1)?;
    let dc2_in = concat_channels(&[&u1, &pyr.quarter])?;
    let (d2, dc2_field) = decoder_forward(&dc2_in, &params.dc2, &specs.dc2)?;
    let u2 = conv_transpose2d(&d2, &params.tc2, &specs.tc2)?;
    let tc3_in = concat_channels(&[&u2, &pyr.half])?;
    let u3 = conv_transpose2d(&tc3_in, &params.tc3, &specs.tc3)?;
    let sc_in = concat_channels(&[&u3, &pyr.full])?;
    let s = conv2d(&sc_in, &params.sc, &specs.sc)?;
    let (out, dc3_field) = decoder_forward(&s, &params.dc3, &specs.dc3)?;

    let cache = FapdCache {
        dc1_in,
        dc1_field,
        tc1_in: d1,
        dc2_in,
        dc2_field,
        tc2_in: d2,
        tc3_in,
        sc_in,
        dc3_in: s,
        dc3_field,
    };
    Ok((out, cache))
}

/// Propagates `grad_out` back through the decoder; the returned pyramid holds
/// the gradients flowing into each encoder tap.
pub fn fapd_backward<S: Scalar>(
    params: &FapdParams<S>,
    cfg: &ModelConfig,
    cache: &FapdCache<S>,
    grad_out: &Tensor<S>,
) -> Result<(FcePyramid<S>, FapdParams<S>)> {
    let specs = FapdSpecs::new(cfg);
    let (full, half, quarter) = (cfg.f_full(), cfg.f_half(), cfg.f_quarter());

    let (g_s, gdc3) =
        decoder_backward(&cache.dc3_in, &params.dc3, &specs.dc3, cache.dc3_field.as_ref(), grad_out)?;
    let scg = conv2d_backward(&cache.sc_in, &params.sc, &specs.sc, &g_s)?;
    let mut cat3 = concat_channels_backward(&[full, full], &scg.input)?;
    let g_full = cat3.pop().unwrap();
    let g_u3 = cat3.pop().unwrap();

    let tc3g = conv_transpose2d_backward(&cache.tc3_in, &params.tc3, &specs.tc3, &g_u3)?;
    let mut cat2 = concat_channels_backward(&[half, half], &tc3g.input)?;
    let g_half = cat2.pop().unwrap();
    let g_u2 = cat2.pop().unwrap();

    let tc2g = conv_transpose2d_backward(&cache.tc2_in, &params.tc2, &specs.tc2, &g_u2)?;
    let (g_cat1, gdc2) =
        decoder_backward(&cache.dc2_in, &params.dc2, &specs.dc2, cache.dc2_field.as_ref(), &tc2g.input)?;
    let mut cat1 = concat_channels_backward(&[quarter, quarter], &g_cat1)?;
    let g_quarter = cat1.pop().unwrap();
    let g_u1 = cat1.pop().unwrap();

    let tc1g = conv_transpose2d_backward(&cache.tc1_in, &params.tc1, &specs.tc1, &g_u1)?;
    let (g_eighth, gdc1) =
        decoder_backward(&cache.dc1_in, &params.dc1, &specs.dc1, cache.dc1_field.as_ref(), &tc1g.input)?;

    let pyramid = FcePyramid { full: g_full, half: g_half, quarter: g_quarter, eighth: g_eighth };
    let grads = FapdParams {
        dc1: gdc1,
        tc1: ConvParams { weight: tc1g.weight, bias: tc1g.bias },
        dc2: gdc2,
        tc2: ConvParams { weight: tc2g.weight, bias: tc2g.bias },
        tc3: ConvParams { weight: tc3g.weight, bias: tc3g.bias },
        sc: ConvParams { weight: scg.weight, bias: scg.bias },
        dc3: gdc3,
    };
    Ok((pyramid, grads))
}
