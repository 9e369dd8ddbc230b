//! Finite-difference verification of every backward pass.
//!
//! Each published operator is checked in isolation at the caller's
//! tolerance, then the whole generator is checked end to end at 10x that
//! tolerance (hundreds of chained ops accumulate roundoff). All instances
//! are small and seeded, so a pass is reproducible.

use panet_core::adaptive::adaptive_conv::{adaptive_conv, adaptive_conv_backward, GeneratedFilter};
use panet_core::adaptive::deform::{deform_conv2d, deform_conv2d_backward};
use panet_core::adaptive::offset::OffsetField;
use panet_core::adaptive::wgen::{weight_generator, weight_generator_backward, GenParams, GenSpec};
use panet_core::error::Result;
use panet_core::gradcheck::{gradcheck, GradCheckConfig, GradCheckReport};
use panet_core::model::discriminator::{disc_backward, disc_forward};
use panet_core::model::panet::{panet_backward, panet_forward};
use panet_core::model::params::{ModelParams, PanetParams};
use panet_core::model::ModelConfig;
use panet_core::nn::conv::{
    conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward, ConvParams, ConvSpec,
};
use panet_core::nn::fc::{grouped_fc, grouped_fc_backward, FcParams, FcSpec};
use panet_core::nn::pool::{maxpool2, maxpool2_backward, spp_pool, spp_pool_backward, PoolMode};
use panet_core::nn::bilinear::{bilinear_sample, bilinear_sample_backward};
use panet_core::rng::{mix, randn_seeded};
use panet_core::tensor::Tensor;

/// Deliberately wrong backward passes, for exercising the harness itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Scale the deformable conv's weight gradient by 1%.
    DeformConv,
}

pub struct SuiteOutcome {
    pub total: usize,
    pub failed: usize,
}

fn cfg_at(tol: f64, seed: u64, op: u64, max_samples: usize) -> GradCheckConfig {
    GradCheckConfig {
        tol,
        max_samples_per_tensor: max_samples,
        seed: mix(seed, op),
        ..Default::default()
    }
}

fn check_conv2d(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let spec = ConvSpec::k3s1p1(3, 4);
    let s = mix(seed, 1);
    let inputs = vec![
        randn_seeded(&[1, 3, 6, 6], 0.8, mix(s, 0))?,
        randn_seeded(&spec.weight_shape(), 0.4, mix(s, 1))?,
        randn_seeded(&[4], 0.4, mix(s, 2))?,
    ];
    let p = |xs: &[Tensor<f64>]| ConvParams { weight: xs[1].clone(), bias: xs[2].clone() };
    gradcheck(
        &|xs| conv2d(&xs[0], &p(xs), &spec),
        &|xs, r| {
            let g = conv2d_backward(&xs[0], &p(xs), &spec, r)?;
            Ok(vec![g.input, g.weight, g.bias])
        },
        &inputs,
        &["input", "weight", "bias"],
        &cfg_at(tol, seed, 1, 0),
    )
}

fn check_conv_transpose2d(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let spec = ConvSpec::k4s2p1(3, 2);
    let s = mix(seed, 2);
    let inputs = vec![
        randn_seeded(&[1, 3, 5, 5], 0.8, mix(s, 0))?,
        randn_seeded(&spec.transpose_weight_shape(), 0.4, mix(s, 1))?,
        randn_seeded(&[2], 0.4, mix(s, 2))?,
    ];
    let p = |xs: &[Tensor<f64>]| ConvParams { weight: xs[1].clone(), bias: xs[2].clone() };
    gradcheck(
        &|xs| conv_transpose2d(&xs[0], &p(xs), &spec),
        &|xs, r| {
            let g = conv_transpose2d_backward(&xs[0], &p(xs), &spec, r)?;
            Ok(vec![g.input, g.weight, g.bias])
        },
        &inputs,
        &["input", "weight", "bias"],
        &cfg_at(tol, seed, 2, 0),
    )
}

/// Random continuous values keep every pooling window off its tie points.
fn check_maxpool2(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let inputs = vec![randn_seeded(&[1, 2, 6, 6], 1.0, mix(seed, 3))?];
    gradcheck(
        &|xs| maxpool2(&xs[0]),
        &|xs, r| Ok(vec![maxpool2_backward(&xs[0], r)?]),
        &inputs,
        &["input"],
        &cfg_at(tol, seed, 3, 0),
    )
}

/// Sampling coordinates stay fractional: the interpolation is not
/// differentiable at integer coordinates.
fn check_bilinear(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let inputs = vec![
        randn_seeded(&[2, 4, 5], 1.0, mix(seed, 4))?,
        Tensor::from_vec(&[2], vec![1.37, 2.58])?,
    ];
    gradcheck(
        &|xs| {
            let (y, x) = (xs[1].data()[0], xs[1].data()[1]);
            Tensor::from_vec(
                &[2],
                vec![bilinear_sample(&xs[0], 0, y, x)?, bilinear_sample(&xs[0], 1, y, x)?],
            )
        },
        &|xs, r| {
            let (y, x) = (xs[1].data()[0], xs[1].data()[1]);
            let mut gf = xs[0].zeros_like();
            let (mut gy, mut gx) = (0.0, 0.0);
            for ch in 0..2 {
                let (taps, ty, tx) = bilinear_sample_backward(&xs[0], ch, y, x, r.data()[ch])?;
                for (idx, v) in taps {
                    gf.data_mut()[idx] += v;
                }
                gy += ty;
                gx += tx;
            }
            Ok(vec![gf, Tensor::from_vec(&[2], vec![gy, gx])?])
        },
        &inputs,
        &["feature", "coords"],
        &cfg_at(tol, seed, 4, 0),
    )
}

fn check_deform_conv2d(tol: f64, seed: u64, fault: Option<Fault>) -> Result<GradCheckReport> {
    let spec = ConvSpec::k3s1p1(2, 3);
    let s = mix(seed, 5);
    let inputs = vec![
        randn_seeded(&[1, 2, 5, 5], 0.8, mix(s, 0))?,
        randn_seeded(&spec.weight_shape(), 0.4, mix(s, 1))?,
        randn_seeded(&[3], 0.4, mix(s, 2))?,
        randn_seeded(&[1, 18, 5, 5], 0.4, mix(s, 3))?,
    ];
    let p = |xs: &[Tensor<f64>]| ConvParams { weight: xs[1].clone(), bias: xs[2].clone() };
    let field = |xs: &[Tensor<f64>]| OffsetField::new(xs[3].clone(), (3, 3));
    gradcheck(
        &|xs| deform_conv2d(&xs[0], &p(xs), &field(xs)?),
        &|xs, r| {
            let g = deform_conv2d_backward(&xs[0], &p(xs), &field(xs)?, r)?;
            let mut weight = g.weight;
            if fault == Some(Fault::DeformConv) {
                for v in weight.data_mut() {
                    *v *= 1.01;
                }
            }
            Ok(vec![g.input, weight, g.bias, g.offsets])
        },
        &inputs,
        &["input", "weight", "bias", "offsets"],
        &cfg_at(tol, seed, 5, 0),
    )
}

fn check_spp_pool(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let inputs = vec![randn_seeded(&[2, 5, 7], 1.0, mix(seed, 6))?];
    gradcheck(
        &|xs| spp_pool(&xs[0], 3, PoolMode::Max),
        &|xs, r| Ok(vec![spp_pool_backward(&xs[0], 3, PoolMode::Max, r)?]),
        &inputs,
        &["region"],
        &cfg_at(tol, seed, 6, 0),
    )
}

fn check_grouped_fc(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let spec = FcSpec::new(12, 8, 4)?;
    let s = mix(seed, 7);
    let inputs = vec![
        randn_seeded(&[12], 1.0, mix(s, 0))?,
        randn_seeded(&spec.weight_shape(), 0.5, mix(s, 1))?,
        randn_seeded(&[8], 0.5, mix(s, 2))?,
    ];
    let p = |xs: &[Tensor<f64>]| FcParams { weight: xs[1].clone(), bias: xs[2].clone() };
    gradcheck(
        &|xs| grouped_fc(&xs[0], &p(xs), &spec),
        &|xs, r| {
            let g = grouped_fc_backward(&xs[0], &p(xs), &spec, r)?;
            Ok(vec![g.input, g.weight, g.bias])
        },
        &inputs,
        &["input", "weight", "bias"],
        &cfg_at(tol, seed, 7, 0),
    )
}

fn wgen_spec() -> GenSpec {
    GenSpec {
        in_channels: 4,
        out_channels: 2,
        kernel: (3, 3),
        spp_bins: 4,
        fc1_out: 16,
        fc2_out: 16,
        groups: (4, 2, 2),
        pool: PoolMode::Max,
    }
}

fn check_weight_generator(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let spec = wgen_spec();
    let s = mix(seed, 8);
    let base = GenParams::<f64>::init(&spec, 0.4, s)?;
    let inputs = vec![
        randn_seeded(&[4, 6, 7], 1.0, mix(s, 10))?,
        base.fc1.weight.clone(),
        base.fc1.bias.clone(),
        base.fc2.weight.clone(),
        base.fc2.bias.clone(),
        base.fc3.weight.clone(),
        base.fc3.bias.clone(),
    ];
    let assemble = |xs: &[Tensor<f64>]| GenParams {
        fc1: FcParams { weight: xs[1].clone(), bias: xs[2].clone() },
        fc2: FcParams { weight: xs[3].clone(), bias: xs[4].clone() },
        fc3: FcParams { weight: xs[5].clone(), bias: xs[6].clone() },
    };
    gradcheck(
        &|xs| {
            let (filter, _) = weight_generator(&xs[0], &assemble(xs), &spec)?;
            Ok(filter.tensor().clone())
        },
        &|xs, r| {
            let p = assemble(xs);
            let (_, cache) = weight_generator(&xs[0], &p, &spec)?;
            let (g_region, g) = weight_generator_backward(&xs[0], &p, &spec, &cache, r)?;
            Ok(vec![
                g_region, g.fc1.weight, g.fc1.bias, g.fc2.weight, g.fc2.bias, g.fc3.weight,
                g.fc3.bias,
            ])
        },
        &inputs,
        &["region", "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "fc3.weight", "fc3.bias"],
        &cfg_at(tol, seed, 8, 0),
    )
}

fn check_adaptive_conv(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let s = mix(seed, 9);
    let inputs = vec![
        randn_seeded(&[3, 5, 5], 0.8, mix(s, 0))?,
        randn_seeded(&[3, 3, 3, 2], 0.4, mix(s, 1))?,
    ];
    gradcheck(
        &|xs| adaptive_conv(&xs[0], &GeneratedFilter::new(xs[1].clone())?),
        &|xs, r| {
            let (gr, gf) = adaptive_conv_backward(&xs[0], &GeneratedFilter::new(xs[1].clone())?, r)?;
            Ok(vec![gr, gf])
        },
        &inputs,
        &["region", "filter"],
        &cfg_at(tol, seed, 9, 0),
    )
}

fn check_discriminator(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let cfg = ModelConfig::tiny();
    let s = mix(seed, 10);
    let base = ModelParams::<f64>::init_fan_scaled(&cfg, s)?.disc;
    let mut inputs = vec![randn_seeded(&[1, 1, 24, 24], 0.5, mix(s, 20))?];
    let mut names: Vec<String> = vec!["input".into()];
    for (i, conv) in base.convs.iter().enumerate() {
        inputs.push(conv.weight.clone());
        inputs.push(conv.bias.clone());
        names.push(format!("conv{}.weight", i + 1));
        names.push(format!("conv{}.bias", i + 1));
    }
    let name_refs: Vec<&str> = names.iter().map(|n| n.as_str()).collect();
    let assemble = |xs: &[Tensor<f64>]| {
        let mut p = base.clone();
        for i in 0..5 {
            p.convs[i].weight = xs[1 + 2 * i].clone();
            p.convs[i].bias = xs[2 + 2 * i].clone();
        }
        p
    };
    gradcheck(
        &|xs| {
            let (y, _) = disc_forward(&xs[0], &assemble(xs), &cfg)?;
            Ok(y)
        },
        &|xs, r| {
            let p = assemble(xs);
            let (_, cache) = disc_forward(&xs[0], &p, &cfg)?;
            let (gx, gp) = disc_backward(&p, &cfg, &cache, r)?;
            let mut out = vec![gx];
            for conv in gp.convs {
                out.push(conv.weight);
                out.push(conv.bias);
            }
            Ok(out)
        },
        &inputs,
        &name_refs,
        &cfg_at(tol, seed, 10, 40),
    )
}

fn check_end_to_end(tol: f64, seed: u64) -> Result<GradCheckReport> {
    let cfg = ModelConfig::tiny();
    let s = mix(seed, 11);
    let gen: PanetParams<f64> = ModelParams::<f64>::init_fan_scaled(&cfg, s)?.gen;
    let x = randn_seeded(&[1, 3, 8, 8], 0.5, mix(s, 30))?;
    let assemble = |xs: &[Tensor<f64>]| -> PanetParams<f64> {
        let mut p = gen.clone();
        p.fce[0].weight = xs[1].clone();
        p.fapd.tc3.weight = xs[2].clone();
        p.capm.as_mut().expect("tiny config has region branches").branches[0].fc3.weight =
            xs[3].clone();
        p.head.weight = xs[4].clone();
        p
    };
    let inputs = vec![
        x,
        gen.fce[0].weight.clone(),
        gen.fapd.tc3.weight.clone(),
        gen.capm.as_ref().expect("tiny config has region branches").branches[0]
            .fc3
            .weight
            .clone(),
        gen.head.weight.clone(),
    ];
    gradcheck(
        &|xs| {
            let (out, _) = panet_forward(&xs[0], &assemble(xs), &cfg)?;
            Ok(out)
        },
        &|xs, r| {
            let p = assemble(xs);
            let (_, cache) = panet_forward(&xs[0], &p, &cfg)?;
            let b = panet_backward(&p, &cfg, &cache, r)?;
            Ok(vec![
                b.input,
                b.params.fce[0].weight.clone(),
                b.params.fapd.tc3.weight.clone(),
                b.params.capm.as_ref().expect("gradients mirror the parameters").branches[0]
                    .fc3
                    .weight
                    .clone(),
                b.params.head.weight.clone(),
            ])
        },
        &inputs,
        &["input", "fce1.weight", "tc3.weight", "branch1.fc3.weight", "head.weight"],
        &cfg_at(tol, seed, 11, 30),
    )
}

/// Run every check, print one table per operator, and summarize.
pub fn run_suite(tol: f64, seed: u64, fault: Option<Fault>) -> Result<SuiteOutcome> {
    let e2e_tol = tol * 10.0;
    let checks: Vec<(&str, Result<GradCheckReport>)> = vec![
        ("conv2d", check_conv2d(tol, seed)),
        ("conv_transpose2d", check_conv_transpose2d(tol, seed)),
        ("maxpool2", check_maxpool2(tol, seed)),
        ("bilinear_sample", check_bilinear(tol, seed)),
        ("deform_conv2d", check_deform_conv2d(tol, seed, fault)),
        ("spp_pool", check_spp_pool(tol, seed)),
        ("grouped_fc", check_grouped_fc(tol, seed)),
        ("weight_generator", check_weight_generator(tol, seed)),
        ("adaptive_conv", check_adaptive_conv(tol, seed)),
        ("discriminator", check_discriminator(tol, seed)),
        ("generator end-to-end (10x tol)", check_end_to_end(e2e_tol, seed)),
    ];
    let mut outcome = SuiteOutcome { total: checks.len(), failed: 0 };
    for (name, result) in checks {
        let report = result?;
        println!("== {name} ==");
        print!("{}", report.format_table());
        if report.passed() {
            println!("PASS (max rel err {:.3e})\n", report.max_rel_err());
        } else {
            outcome.failed += 1;
            println!("FAIL (max rel err {:.3e} > tol {:.1e})\n", report.max_rel_err(), report.tol);
        }
    }
    Ok(outcome)
}
