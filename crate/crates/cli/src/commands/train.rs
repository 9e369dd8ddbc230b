//! Training: loads the manifest, pads every pair, runs the alternating
//! generator/discriminator loop, and leaves behind a loss log, periodic
//! checkpoints, the final checkpoint and a summary.
//!
//! On divergence the parameters still hold the last finite state (every
//! update is gated on finiteness checks), so a `last_good.ckpt` is written
//! before exiting with code 4.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use panet_core::error::{Error, Result};
use panet_core::io::image::{load_gray, load_image, pad_to_multiple};
use panet_core::io::manifest::{DatasetManifest, Split};
use panet_core::model::checkpoint::save_checkpoint;
use panet_core::model::discriminator::DISC_MIN_SIDE;
use panet_core::model::panet::panet_forward;
use panet_core::scalar::Scalar;
use panet_core::tensor::Tensor;
use panet_core::train::config::RunConfig;
use panet_core::train::loss::euclidean_loss;
use panet_core::train::trainer::{Sample, StepStats, Trainer};

use crate::commands::ensure_out;
use crate::config::{build_config, load_matching_checkpoint, ConfigArgs};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest (CSV: photo,sketch,split)
    #[arg(long)]
    pub manifest: PathBuf,

    /// Output directory for checkpoints, loss log and summary
    #[arg(long)]
    pub out: PathBuf,

    /// Total optimizer steps (overrides train.steps)
    #[arg(long)]
    pub steps: Option<u64>,

    /// Seed for weight init and pair sampling (overrides train.seed)
    #[arg(long)]
    pub seed: Option<u64>,

    /// Continue from a checkpoint written by an identical configuration
    #[arg(long)]
    pub resume: Option<PathBuf>,

    #[command(flatten)]
    pub config: ConfigArgs,
}

fn load_samples(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Vec<Sample<f32>>> {
    let entries = manifest.split_entries(Split::Train);
    if entries.is_empty() {
        return Err(Error::data("manifest has no training pairs"));
    }
    // The discriminator's conv stack needs a minimum spatial extent; only
    // pad for it when the adversarial path is actually on.
    let mut floors = cfg.model.branch_grids.clone();
    if cfg.train.adv_weight > 0.0 {
        floors.push(DISC_MIN_SIDE);
    }
    let mut samples = Vec::with_capacity(entries.len());
    for entry in entries {
        let photo: Tensor<f32> = load_image(&manifest.resolve(&entry.photo))?;
        let sketch: Tensor<f32> = load_gray(&manifest.resolve(&entry.sketch))?;
        let (pc, ph, pw) = photo.dims3()?;
        if pc != cfg.model.input_channels {
            return Err(Error::data(format!(
                "{}: {pc} channels, model expects {}",
                entry.photo.display(),
                cfg.model.input_channels
            )));
        }
        let (_, sh, sw) = sketch.dims3()?;
        if (sh, sw) != (ph, pw) {
            return Err(Error::data(format!(
                "{}: sketch is {sh}x{sw} but its photo is {ph}x{pw}",
                entry.sketch.display()
            )));
        }
        let (photo, _) = pad_to_multiple(&photo, 8, &floors)?;
        let (sketch, _) = pad_to_multiple(&sketch, 8, &floors)?;
        let (c, h, w) = photo.dims3()?;
        samples.push(Sample {
            photo: photo.reshape(&[1, c, h, w])?,
            sketch: sketch.reshape(&[1, 1, h, w])?,
        });
    }
    Ok(samples)
}

fn save_trainer_checkpoint(path: &Path, trainer: &Trainer<f32>) -> Result<()> {
    let entries = trainer.checkpoint_entries();
    let refs: Vec<(String, &Tensor<f32>)> =
        entries.iter().map(|(p, t)| (p.clone(), t)).collect();
    save_checkpoint(path, trainer.cfg.model.digest(), &refs)
}

/// Mean reconstruction loss of the current generator over the samples.
fn mean_l2(trainer: &Trainer<f32>, samples: &[Sample<f32>]) -> Result<f64> {
    let mut acc = 0.0;
    for s in samples {
        let (out, _) = panet_forward(&s.photo, &trainer.params.gen, &trainer.cfg.model)?;
        acc += euclidean_loss(&out, &s.sketch)?.to_f64_lossy();
    }
    Ok(acc / samples.len() as f64)
}

pub fn run(args: &TrainArgs) -> Result<i32> {
    let mut cfg = build_config(&args.config)?;
    if let Some(s) = args.steps {
        cfg.train.steps = s;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;

    let manifest = DatasetManifest::load(&args.manifest)?;
    let samples = load_samples(&manifest, &cfg)?;
    ensure_out(&args.out)?;
    std::fs::write(args.out.join("config.txt"), cfg.to_text())?;

    let mut trainer = Trainer::<f32>::new(cfg)?;
    let resuming = if let Some(ck) = &args.resume {
        let entries = load_matching_checkpoint(ck, &trainer.cfg.model)?;
        trainer.load_state(&entries)?;
        println!("resumed from {} at step {}", ck.display(), trainer.steps_done());
        true
    } else {
        false
    };
    println!(
        "training {} pairs for {} steps ({} parameters, adv weight {})",
        samples.len(),
        trainer.cfg.train.steps,
        trainer.params.param_count(),
        trainer.cfg.train.adv_weight
    );

    let log_path = args.out.join("loss.csv");
    let mut log = if resuming && log_path.exists() {
        std::io::BufWriter::new(std::fs::File::options().append(true).open(&log_path)?)
    } else {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
        writeln!(f, "step,l2,adv_g,adv_d")?;
        f
    };

    let total = trainer.cfg.train.steps;
    let every = trainer.cfg.train.checkpoint_every;
    let progress_every = (total / 10).max(1);
    let out_dir = args.out.clone();
    let mut last: Option<StepStats> = None;
    let run_result = trainer.run(&samples, |stats, t| {
        writeln!(log, "{},{},{},{}", stats.step, stats.l2, stats.adv_g, stats.adv_d)?;
        if every > 0 && stats.step % every == 0 && stats.step < total {
            let path = out_dir.join(format!("ckpt_step{:06}.ckpt", stats.step));
            save_trainer_checkpoint(&path, t)?;
        }
        if stats.step % progress_every == 0 || stats.step == total {
            println!(
                "step {}/{}  l2 {:.6}  adv_g {:.6}  adv_d {:.6}",
                stats.step, total, stats.l2, stats.adv_g, stats.adv_d
            );
        }
        last = Some(*stats);
        Ok(())
    });
    log.flush()?;

    if let Err(e) = run_result {
        if let Error::Divergence { step, msg } = &e {
            let path = args.out.join("last_good.ckpt");
            save_trainer_checkpoint(&path, &trainer)?;
            eprintln!(
                "diverged at step {step} ({msg}); parameters from the last finite step \
                 are in {}",
                path.display()
            );
        }
        return Err(e);
    }

    let final_l2 = mean_l2(&trainer, &samples)?;
    let ckpt = args.out.join("model.ckpt");
    save_trainer_checkpoint(&ckpt, &trainer)?;
    let summary = format!(
        "steps={}\nparams={}\nfinal_mean_l2={final_l2}\nlast_step_l2={}\n",
        trainer.steps_done(),
        trainer.params.param_count(),
        last.map(|s| s.l2).unwrap_or(f64::NAN)
    );
    std::fs::write(args.out.join("summary.txt"), &summary)?;
    println!("final mean l2 over the training pairs: {final_l2:.6}");
    println!("checkpoint: {}", ckpt.display());
    Ok(0)
}
