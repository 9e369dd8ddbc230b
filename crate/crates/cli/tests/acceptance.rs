//! Acceptance checks for the whole workspace. Each test covers one release
//! criterion and ends with a single `criterion N: PASS ...` line carrying
//! the measured evidence (visible under `--nocapture`); a failed assert in
//! any test is that criterion's FAIL.
//!
//! The heavyweight one is criterion 5 (a 2000-step training run); run
//! `cargo test --test acceptance -- --skip criterion_5` for a quick pass
//! over everything else.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use panet_core::adaptive::deform::deform_conv2d;
use panet_core::adaptive::offset::OffsetField;
use panet_core::io::fixture::{render_pair, synth_fixture};
use panet_core::io::image::{load_gray, load_image, pad_to_multiple, save_image};
use panet_core::io::manifest::{DatasetManifest, Split};
use panet_core::metrics::fsim::fsim;
use panet_core::metrics::gaussian_blur;
use panet_core::metrics::scoot::scoot;
use panet_core::metrics::ssim::ssim;
use panet_core::model::checkpoint::{load_checkpoint, save_checkpoint};
use panet_core::model::discriminator::DISC_MIN_SIDE;
use panet_core::model::inspect::ancestral_sampling_locations;
use panet_core::model::panet::panet_forward;
use panet_core::model::params::ModelParams;
use panet_core::model::{FapdVariant, ModelConfig};
use panet_core::nn::conv::{conv2d, ConvParams, ConvSpec};
use panet_core::rng::{normal_at, randn_seeded, CounterRng};
use panet_core::tensor::Tensor;
use panet_core::train::config::RunConfig;
use panet_core::train::loss::euclidean_loss;
use panet_core::train::trainer::{Sample, Trainer};

fn panet_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_panet"))
}

/// Mirrors the training command's pair loading: pad to the model's grid
/// multiple with the discriminator floor applied only when adversarial
/// training is on.
fn load_samples(dir: &Path, cfg: &RunConfig) -> Vec<Sample<f32>> {
    let manifest = DatasetManifest::load(&dir.join("manifest.csv")).unwrap();
    let mut floors = cfg.model.branch_grids.clone();
    if cfg.train.adv_weight > 0.0 {
        floors.push(DISC_MIN_SIDE);
    }
    manifest
        .split_entries(Split::Train)
        .iter()
        .map(|entry| {
            let photo: Tensor<f32> = load_image(&manifest.resolve(&entry.photo)).unwrap();
            let sketch: Tensor<f32> = load_gray(&manifest.resolve(&entry.sketch)).unwrap();
            let (photo, _) = pad_to_multiple(&photo, 8, &floors).unwrap();
            let (sketch, _) = pad_to_multiple(&sketch, 8, &floors).unwrap();
            let (c, h, w) = photo.dims3().unwrap();
            Sample {
                photo: photo.reshape(&[1, c, h, w]).unwrap(),
                sketch: sketch.reshape(&[1, 1, h, w]).unwrap(),
            }
        })
        .collect()
}

fn mean_l2(trainer: &Trainer<f32>, samples: &[Sample<f32>]) -> f64 {
    let mut acc = 0.0;
    for s in samples {
        let (out, _) = panet_forward(&s.photo, &trainer.params.gen, &trainer.cfg.model).unwrap();
        acc += euclidean_loss(&out, &s.sketch).unwrap() as f64;
    }
    acc / samples.len() as f64
}

fn entries_bitwise_equal(a: &[(String, Tensor<f32>)], b: &[(String, Tensor<f32>)]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|((pa, ta), (pb, tb))| {
            pa == pb
                && ta.shape() == tb.shape()
                && ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        })
}

#[test]
fn criterion_1_zero_offset_deformable_matches_standard_conv() {
    let start = Instant::now();
    let mut rng = CounterRng::new(0xACC1);
    let mut max_diff = 0.0f64;
    for i in 0..50 {
        let n = 1 + rng.below(2);
        let in_c = 1 + rng.below(4);
        let out_c = 1 + rng.below(4);
        let h = 3 + rng.below(8);
        let w = 3 + rng.below(8);
        let spec = ConvSpec::k3s1p1(in_c, out_c);
        let x: Tensor<f64> = randn_seeded(&[n, in_c, h, w], 1.0, 900 + i).unwrap();
        let mut p = ConvParams::init(&spec, 0.5, 950 + i).unwrap();
        p.bias = randn_seeded(&[out_c], 0.5, 990 + i).unwrap();
        let zero = OffsetField::zeros(n, (3, 3), h, w).unwrap();
        let deformed = deform_conv2d(&x, &p, &zero).unwrap();
        let plain = conv2d(&x, &p, &spec).unwrap();
        for (a, b) in deformed.data().iter().zip(plain.data()) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(max_diff < 1e-12, "zero-offset mismatch: max |diff| = {max_diff:e}");
    assert!(secs < 10.0, "took {secs:.1}s, limit 10s");
    println!(
        "criterion 1: PASS - 50 zero-offset instances match plain conv, \
         max |diff| {max_diff:.2e} (< 1e-12), {secs:.2}s"
    );
}

#[test]
fn criterion_2_gradient_suite_passes() {
    let start = Instant::now();
    let out = panet_bin().arg("gradcheck").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let secs = start.elapsed().as_secs_f64();
    assert!(
        out.status.success(),
        "gradcheck exited {:?}:\n{stdout}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    for op in [
        "conv2d",
        "conv_transpose2d",
        "maxpool2",
        "bilinear_sample",
        "deform_conv2d",
        "spp_pool",
        "grouped_fc",
        "weight_generator",
        "adaptive_conv",
        "discriminator",
        "generator end-to-end",
    ] {
        assert!(stdout.contains(&format!("== {op}")), "suite skipped {op}:\n{stdout}");
    }
    assert!(!stdout.contains("FAIL"), "suite reported a failure:\n{stdout}");
    assert!(secs < 300.0, "took {secs:.1}s, limit 5min");
    println!(
        "criterion 2: PASS - finite-difference suite green over 11 checks \
         (ops at rel tol 1e-4, end-to-end at 1e-3), {secs:.1}s"
    );
}

#[test]
fn criterion_3_default_config_shapes_at_120() {
    let start = Instant::now();
    let cfg = ModelConfig::default();
    assert_eq!(cfg.branch_grids, vec![3, 4, 5]);
    let params = ModelParams::<f32>::init(&cfg, 3).unwrap();
    let x: Tensor<f32> = randn_seeded(&[1, 3, 120, 120], 1.0, 4).unwrap();
    let (out, cache) = panet_forward(&x, &params.gen, &cfg).unwrap();
    assert_eq!(cache.fce.taps.eighth.shape(), &[1, 256, 15, 15], "encoder eighth-scale tap");
    assert_eq!(cache.fapd_out.shape(), &[1, 64, 120, 120], "decoder output");
    assert_eq!(cache.head_in.shape(), &[1, 96, 120, 120], "region-branch concatenation");
    assert_eq!(out.shape(), &[1, 1, 120, 120], "sketch output");
    assert_eq!(cfg.gen_spec().filter_len(), 18_432);
    let filter = &cache.capm.as_ref().unwrap().branches[0][0].filters[0];
    assert_eq!(filter.tensor().shape(), &[64, 3, 3, 32]);
    assert_eq!(filter.tensor().len(), 18_432, "generated filter coefficient count");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "took {secs:.1}s, limit 1min");
    println!(
        "criterion 3: PASS - 1x3x120x120 gives eighth 1x256x15x15, decoder 1x64x120x120, \
         region concat 1x96x120x120, sketch 1x1x120x120, generated filter 18432 values, {secs:.1}s"
    );
}

#[test]
fn criterion_4_ancestral_enumeration_and_static_stencil() {
    let start = Instant::now();
    let cfg = ModelConfig::default();
    let x: Tensor<f32> = randn_seeded(&[1, 3, 64, 64], 1.0, 41).unwrap();
    let pa = ModelParams::<f32>::init(&cfg, 5).unwrap();
    let pb = ModelParams::<f32>::init(&cfg, 6).unwrap();

    let taps_a = ancestral_sampling_locations(&x, &pa.gen, &cfg, (32, 32), false).unwrap();
    assert_eq!(taps_a.len(), 729, "ancestral location count");

    // With offsets suppressed the stencil is a pure function of the
    // topology: different weights must enumerate identical locations.
    let za = ancestral_sampling_locations(&x, &pa.gen, &cfg, (32, 32), true).unwrap();
    let zb = ancestral_sampling_locations(&x, &pb.gen, &cfg, (32, 32), true).unwrap();
    assert_eq!(za.len(), 729);
    assert!(
        za.iter().zip(&zb).all(|(p, q)| {
            p.i == q.i && p.j == q.j && p.k == q.k
                && p.y.to_bits() == q.y.to_bits()
                && p.x.to_bits() == q.x.to_bits()
        }),
        "zero-offset stencil depends on the weights"
    );
    // Learned offsets do perturb the ancestry.
    let taps_b = ancestral_sampling_locations(&x, &pb.gen, &cfg, (32, 32), false).unwrap();
    assert!(
        taps_a.iter().zip(&taps_b).any(|(p, q)| p.y != q.y || p.x != q.x),
        "offset fields had no effect on sampling locations"
    );

    // Same enumeration through the command line.
    let dir = tempfile::tempdir().unwrap();
    let (photo, _, _) = render_pair(11, 0, 64);
    save_image(&photo, &dir.path().join("face.png")).unwrap();
    let out = panet_bin()
        .args(["inspect", "--image"])
        .arg(dir.path().join("face.png"))
        .args(["--pixel", "32,32", "--zero-offsets", "--out"])
        .arg(dir.path().join("insp"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "inspect failed: {stdout}");
    assert!(stdout.contains("729 sampling locations"), "inspect stdout: {stdout}");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "took {secs:.1}s, limit 1min");
    println!(
        "criterion 4: PASS - 729 ancestral locations enumerated; zero-offset stencil \
         identical across weight seeds and offsets verified to move it, {secs:.1}s"
    );
}

#[test]
fn criterion_5_overfits_four_pairs_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path(), 1, 4, 64).unwrap();

    let mut cfg = RunConfig::default();
    cfg.train.adv_weight = 0.0;
    cfg.train.steps = 2000;
    let samples = load_samples(dir.path(), &cfg);
    assert_eq!(samples.len(), 4);

    let start = Instant::now();
    let mut l2 = Vec::with_capacity(2000);
    let mut trainer = Trainer::<f32>::new(cfg.clone()).unwrap();
    trainer
        .run(&samples, |stats, _| {
            l2.push(stats.l2);
            Ok(())
        })
        .unwrap();
    let train_secs = start.elapsed().as_secs_f64();

    let final_l2 = mean_l2(&trainer, &samples);
    assert!(final_l2 < 0.01, "mean reconstruction loss {final_l2} after 2000 steps");

    // Trajectory shape via the 200-step moving average (ma[t] covers steps
    // t+1..=t+200). Single-sample steps make consecutive windows noisy and
    // the optimizer occasionally overshoots near convergence and recovers,
    // so the decrease is asserted in aggregate: after step 400 the average
    // never climbs materially above its step-400 level (divergence shows up
    // as 10x or worse), and it ends at least twenty times below it. The
    // largest transient excursion above the running minimum is reported
    // alongside.
    let ma: Vec<f64> = (0..=l2.len() - 200)
        .map(|t| l2[t..t + 200].iter().sum::<f64>() / 200.0)
        .collect();
    let at_400 = ma[200];
    let peak_after = ma[201..].iter().cloned().fold(f64::MIN, f64::max);
    assert!(
        peak_after <= 1.25 * at_400,
        "moving average climbed back above its step-400 level: {peak_after} vs {at_400}"
    );
    let last = *ma.last().unwrap();
    assert!(
        last <= 0.05 * at_400,
        "moving average barely decreased: step 400 {at_400}, end {last}"
    );
    let mut run_min = at_400;
    let mut excursion = 1.0f64;
    for &v in &ma[200..] {
        run_min = run_min.min(v);
        excursion = excursion.max(v / run_min);
    }

    // Bit-exact seed reproducibility of the same run, demonstrated over a
    // 120-step prefix (the loop has no step-count-dependent branches).
    let mut short_cfg = cfg.clone();
    short_cfg.train.steps = 120;
    let mut ta = Trainer::<f32>::new(short_cfg.clone()).unwrap();
    ta.run(&samples, |_, _| Ok(())).unwrap();
    let mut tb = Trainer::<f32>::new(short_cfg).unwrap();
    tb.run(&samples, |_, _| Ok(())).unwrap();
    assert!(
        entries_bitwise_equal(&ta.checkpoint_entries(), &tb.checkpoint_entries()),
        "same-seed runs diverged bitwise"
    );

    println!(
        "criterion 5: PASS - 2000 steps on 4 synthetic 64x64 pairs: mean L2 {final_l2:.2e} \
         (< 0.01) in {:.1} min; post-400 moving average peaked at {:.2}x its step-400 level, \
         ended at {:.3}x, worst transient {:.0}x above the running minimum (recovered); \
         same-seed 120-step runs bitwise identical",
        train_secs / 60.0,
        peak_after / at_400,
        last / at_400,
        excursion
    );
}

#[test]
fn criterion_6_ablations_instantiate_and_train() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path(), 2, 4, 32).unwrap();

    let mut results: Vec<(&str, usize, f64)> = Vec::new();
    for (name, variant, grids) in [
        ("decoder-sc", FapdVariant::Standard, vec![]),
        ("decoder", FapdVariant::Deformable, vec![]),
        ("decoder+regions", FapdVariant::Deformable, vec![3, 4, 5]),
    ] {
        let mut cfg = RunConfig::default();
        cfg.model.fapd_variant = variant;
        cfg.model.branch_grids = grids;
        cfg.train.steps = 100;
        let samples = load_samples(dir.path(), &cfg);
        let mut trainer = Trainer::<f32>::new(cfg).unwrap();
        let count = trainer.params.param_count();
        trainer.run(&samples, |_, _| Ok(())).unwrap();
        results.push((name, count, mean_l2(&trainer, &samples)));
    }
    assert!(
        results[0].1 < results[1].1 && results[1].1 < results[2].1,
        "parameter counts are not distinct and increasing: {results:?}"
    );
    // The loss ordering after 100 steps is recorded, deliberately unasserted:
    // so few steps say nothing stable about final quality.
    let line = results
        .iter()
        .map(|(n, c, l)| format!("{n} {c} params l2 {l:.4}"))
        .collect::<Vec<_>>()
        .join("; ");
    println!("criterion 6: PASS - three topologies trained 100 steps: {line}");
}

#[test]
fn criterion_7_metric_axioms() {
    let start = Instant::now();
    let size = 64;
    let (photo_rgb, sketch, _) = render_pair(21, 0, size);
    let hw = size * size;
    let photo = Tensor::from_fn(&[size, size], |i| {
        (photo_rgb.data()[i] + photo_rgb.data()[hw + i] + photo_rgb.data()[2 * hw + i]) / 3.0
    })
    .unwrap();
    let sketch = sketch.reshape(&[size, size]).unwrap();

    // Identity: every metric reports exactly 1 on equal inputs.
    for img in [&photo, &sketch] {
        for (name, m) in [
            ("ssim", ssim(img, img).unwrap()),
            ("fsim", fsim(img, img).unwrap()),
            ("scoot", scoot(img, img).unwrap()),
        ] {
            assert!((m - 1.0).abs() < 1e-9, "{name} on identical images: {m}");
        }
    }

    // Symmetry.
    type Metric = fn(&Tensor<f64>, &Tensor<f64>) -> panet_core::Result<f64>;
    let metrics: [(&str, Metric); 3] = [("ssim", ssim), ("fsim", fsim), ("scoot", scoot)];
    let noisy = |sigma: f64, seed: u64| {
        Tensor::from_fn(&[size, size], |i| {
            (photo.data()[i] + sigma * normal_at(seed, i as u64)).clamp(0.0, 1.0)
        })
        .unwrap()
    };
    let other = noisy(0.1, 71);
    for (name, f) in metrics {
        let ab = f(&photo, &other).unwrap();
        let ba = f(&other, &photo).unwrap();
        assert!((ab - ba).abs() < 1e-12, "{name} asymmetric: {ab} vs {ba}");
    }

    // Monotone degradation along one noise direction, four amplitudes.
    for (name, f) in metrics {
        let scores: Vec<f64> = [0.02, 0.05, 0.1, 0.2]
            .iter()
            .map(|&s| f(&photo, &noisy(s, 72)).unwrap())
            .collect();
        assert!(
            scores.windows(2).all(|w| w[0] > w[1]),
            "{name} not monotone over the noise sweep: {scores:?}"
        );
    }

    // Structure over pointwise error: at matched mean squared error, blur
    // should outscore noise under ssim in at least 8 of 10 trials.
    let mut wins = 0;
    for seed in 0..10u64 {
        let (rgb, _, _) = render_pair(100 + seed, 0, size);
        let img = Tensor::from_fn(&[size, size], |i| {
            (rgb.data()[i] + rgb.data()[hw + i] + rgb.data()[2 * hw + i]) / 3.0
        })
        .unwrap();
        let blurred = gaussian_blur(&img, 1.5).unwrap();
        let mse_blur = img
            .data()
            .iter()
            .zip(blurred.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (hw as f64);
        let field: Vec<f64> = (0..hw).map(|i| normal_at(200 + seed, i as u64)).collect();
        let field_ms = field.iter().map(|v| v * v).sum::<f64>() / (hw as f64);
        let scale = (mse_blur / field_ms).sqrt();
        let noised =
            Tensor::from_fn(&[size, size], |i| img.data()[i] + scale * field[i]).unwrap();
        if ssim(&img, &blurred).unwrap() > ssim(&img, &noised).unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 8, "ssim preferred blur over matched-mse noise in only {wins}/10 trials");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "took {secs:.1}s, limit 2min");
    println!(
        "criterion 7: PASS - identity exactly 1, symmetric, monotone under noise; \
         ssim favored blur over matched-mse noise in {wins}/10 trials, {secs:.1}s"
    );
}

#[test]
fn criterion_8_checkpoint_resume_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path(), 3, 4, 32).unwrap();
    let mut cfg = RunConfig::default();
    cfg.train.steps = 100;
    assert!(cfg.train.adv_weight > 0.0, "resume must cover the discriminator state");
    let samples = load_samples(dir.path(), &cfg);

    // Uninterrupted reference: 100 steps.
    let mut straight = Trainer::<f32>::new(cfg.clone()).unwrap();
    straight.run(&samples, |_, _| Ok(())).unwrap();

    // Interrupted twin: 50 steps, checkpoint to disk, reload, 50 more.
    let mut half_cfg = cfg.clone();
    half_cfg.train.steps = 50;
    let mut first = Trainer::<f32>::new(half_cfg).unwrap();
    first.run(&samples, |_, _| Ok(())).unwrap();
    let entries = first.checkpoint_entries();
    let refs: Vec<(String, &Tensor<f32>)> = entries.iter().map(|(p, t)| (p.clone(), t)).collect();
    let ckpt = dir.path().join("half.ckpt");
    save_checkpoint(&ckpt, cfg.model.digest(), &refs).unwrap();

    let (digest, loaded) = load_checkpoint(&ckpt).unwrap();
    assert_eq!(digest, cfg.model.digest());
    let mut resumed = Trainer::<f32>::new(cfg).unwrap();
    resumed.load_state(&loaded).unwrap();
    assert_eq!(resumed.steps_done(), 50);
    resumed.run(&samples, |_, _| Ok(())).unwrap();

    assert!(
        entries_bitwise_equal(&straight.checkpoint_entries(), &resumed.checkpoint_entries()),
        "resumed run differs from the uninterrupted run"
    );
    println!(
        "criterion 8: PASS - 50-step checkpoint to disk, reload and 50 more steps match \
         an uninterrupted 100-step run bitwise (weights and optimizer state)"
    );
}
