//! Full generator: encoder pyramid -> decoder -> region perception -> 1x1
//! projection to a single sketch channel.

use crate::adaptive::capm::{capm_backward, capm_forward, CapmCache, CapmParams};
use crate::error::{Error, Result};
use crate::model::fapd::{fapd_backward, fapd_forward, FapdCache};
use crate::model::fce::{fce_backward, fce_forward, FceCache};
use crate::model::params::{head_spec, PanetParams};
use crate::model::ModelConfig;
use crate::nn::conv::{conv2d, conv2d_backward, ConvParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct PanetCache<S> {
    pub fce: FceCache<S>,
    pub fapd: FapdCache<S>,
    /// Decoder output, the input of the region stage (and of the head when
    /// region perception is disabled).
    pub fapd_out: Tensor<S>,
    pub capm: Option<CapmCache<S>>,
    pub head_in: Tensor<S>,
}

/// Gradients of everything: parameters plus the model input.
#[derive(Debug)]
pub struct PanetBackward<S> {
    pub params: PanetParams<S>,
    pub input: Tensor<S>,
}

pub fn panet_forward<S: Scalar>(
    x: &Tensor<S>,
    params: &PanetParams<S>,
    cfg: &ModelConfig,
) -> Result<(Tensor<S>, PanetCache<S>)> {
    let (pyr, fce_cache) = fce_forward(x, &params.fce, cfg)?;
    let (fapd_out, fapd_cache) = fapd_forward(&pyr, &params.fapd, cfg)?;
    let (head_in, capm_cache) = match (&params.capm, cfg.capm_spec()) {
        (Some(cp), Some(spec)) => {
            let (y, c) = capm_forward(&fapd_out, cp, &spec)?;
            (y, Some(c))
        }
        (None, None) => (fapd_out.clone(), None),
        _ => {
            return Err(Error::InvalidParam(
                "parameters and config disagree about region perception".into(),
            ))
        }
    };
    let out = conv2d(&head_in, &params.head, &head_spec(cfg))?;
    let cache = PanetCache { fce: fce_cache, fapd: fapd_cache, fapd_out, capm: capm_cache, head_in };
    Ok((out, cache))
}

pub fn panet_backward<S: Scalar>(
    params: &PanetParams<S>,
    cfg: &ModelConfig,
    cache: &PanetCache<S>,
    grad_out: &Tensor<S>,
) -> Result<PanetBackward<S>> {
    let hg = conv2d_backward(&cache.head_in, &params.head, &head_spec(cfg), grad_out)?;
    let (g_fapd_out, capm_grads) = match (&params.capm, &cache.capm) {
        (Some(cp), Some(cc)) => {
            let spec = cfg
                .capm_spec()
                .ok_or_else(|| Error::InvalidParam("region params without region config".into()))?;
            let cg = capm_backward(&cache.fapd_out, cp, &spec, cc, &hg.input)?;
            (cg.input, Some(CapmParams { branches: cg.branches }))
        }
        (None, None) => (hg.input, None),
        _ => {
            return Err(Error::InvalidParam(
                "parameters and cache disagree about region perception".into(),
            ))
        }
    };
    let (gpyr, fapd_grads) = fapd_backward(&params.fapd, cfg, &cache.fapd, &g_fapd_out)?;
    let (gx, fce_grads) = fce_backward(&params.fce, cfg, &cache.fce, &gpyr)?;
    Ok(PanetBackward {
        params: PanetParams {
            fce: fce_grads,
            fapd: fapd_grads,
            capm: capm_grads,
            head: ConvParams { weight: hg.weight, bias: hg.bias },
        },
        input: gx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradcheck, require_pass, GradCheckConfig};
    use crate::model::params::ModelParams;
    use crate::rng::randn_seeded;

    #[test]
    fn produces_one_sketch_channel_at_input_resolution() {
        let cfg = ModelConfig::tiny();
        let params = ModelParams::<f64>::init(&cfg, 1).unwrap();
        let x = randn_seeded(&[2, 3, 16, 16], 0.5, 60).unwrap();
        let (out, cache) = panet_forward(&x, &params.gen, &cfg).unwrap();
        assert_eq!(out.shape(), [2, 1, 16, 16]);
        assert_eq!(cache.head_in.shape(), [2, cfg.head_in_channels(), 16, 16]);
        assert!(cache.capm.is_some());
    }

    #[test]
    fn no_region_config_routes_decoder_output_to_head() {
        let mut cfg = ModelConfig::tiny();
        cfg.branch_grids.clear();
        let params = ModelParams::<f64>::init(&cfg, 1).unwrap();
        let x = randn_seeded(&[1, 3, 8, 8], 0.5, 61).unwrap();
        let (out, cache) = panet_forward(&x, &params.gen, &cfg).unwrap();
        assert_eq!(out.shape(), [1, 1, 8, 8]);
        assert!(cache.capm.is_none());
        assert_eq!(cache.head_in.data(), cache.fapd_out.data());
    }

    #[test]
    fn params_config_disagreement_is_rejected() {
        let cfg = ModelConfig::tiny();
        let params = ModelParams::<f64>::init(&cfg, 1).unwrap();
        let mut no_capm = cfg.clone();
        no_capm.branch_grids.clear();
        let x = randn_seeded(&[1, 3, 8, 8], 0.5, 62).unwrap();
        assert!(matches!(
            panet_forward(&x, &params.gen, &no_capm),
            Err(Error::InvalidParam(_))
        ));
    }

    /// End-to-end check through every stage. The composite chains dozens of
    /// ops, so the tolerance is looser than for single layers.
    #[test]
    fn gradcheck_end_to_end() {
        let cfg = ModelConfig::tiny();
        let gen = ModelParams::<f64>::init_fan_scaled(&cfg, 13).unwrap().gen;
        let x = randn_seeded(&[1, 3, 8, 8], 0.5, 63).unwrap();

        let assemble = |xs: &[Tensor<f64>]| -> PanetParams<f64> {
            let mut p = gen.clone();
            p.fce[0].weight = xs[1].clone();
            p.fapd.tc3.weight = xs[2].clone();
            p.capm.as_mut().unwrap().branches[0].fc3.weight = xs[3].clone();
            p.head.weight = xs[4].clone();
            p
        };
        let fwd = |xs: &[Tensor<f64>]| {
            let (out, _) = panet_forward(&xs[0], &assemble(xs), &cfg)?;
            Ok(out)
        };
        let bwd = |xs: &[Tensor<f64>], r: &Tensor<f64>| {
            let p = assemble(xs);
            let (_, cache) = panet_forward(&xs[0], &p, &cfg)?;
            let b = panet_backward(&p, &cfg, &cache, r)?;
            Ok(vec![
                b.input,
                b.params.fce[0].weight.clone(),
                b.params.fapd.tc3.weight.clone(),
                b.params.capm.as_ref().unwrap().branches[0].fc3.weight.clone(),
                b.params.head.weight.clone(),
            ])
        };
        let inputs = vec![
            x,
            gen.fce[0].weight.clone(),
            gen.fapd.tc3.weight.clone(),
            gen.capm.as_ref().unwrap().branches[0].fc3.weight.clone(),
            gen.head.weight.clone(),
        ];
        let report = gradcheck(
            &fwd,
            &bwd,
            &inputs,
            &["input", "fce1.weight", "tc3.weight", "b1.fc3.weight", "head.weight"],
            &GradCheckConfig { tol: 1e-3, max_samples_per_tensor: 30, ..Default::default() },
        )
        .unwrap();
        require_pass(&report).unwrap();
    }
}
