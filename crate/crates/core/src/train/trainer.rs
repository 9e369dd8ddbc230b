//! Alternating generator/discriminator training loop.
//!
//! Per step: one generator update (pixel loss plus weighted adversarial
//! term), then one discriminator update scored against the pre-update fake.
//! With adv_weight = 0 the discriminator is never evaluated or updated.
//!
//! Everything downstream of (config, seed, step count) is deterministic, so
//! a resumed run retraces the uninterrupted one bit for bit. The sampler
//! carries no hidden state: the pair used at step t is a pure function of
//! (seed, t).

use crate::error::{Error, Result};
use crate::model::checkpoint::fill_params_from_entries;
use crate::model::discriminator::{disc_backward, disc_forward};
use crate::model::panet::{panet_backward, panet_forward};
use crate::model::params::ModelParams;
use crate::rng::seeded_permutation;
use crate::scalar::{axpy, Scalar};
use crate::tensor::Tensor;
use crate::train::adam::{adam_step, AdamConfig, AdamState};
use crate::train::config::{RunConfig, TrainConfig};
use crate::train::loss::{
    euclidean_loss, euclidean_loss_backward, lsgan_d_backward, lsgan_g_backward, lsgan_g_loss,
    lsgan_losses,
};

/// One photo/sketch pair, both already normalized to [0,1].
#[derive(Debug, Clone)]
pub struct Sample<S> {
    pub photo: Tensor<S>,
    pub sketch: Tensor<S>,
}

/// Per-step losses, converted to f64 for logging. Adversarial fields are 0
/// when the discriminator is disabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub l2: f64,
    pub adv_g: f64,
    pub adv_d: f64,
}

pub struct Trainer<S: Scalar> {
    pub cfg: RunConfig,
    pub params: ModelParams<S>,
    opt_g: AdamState<S>,
    opt_d: AdamState<S>,
    step: u64,
}

fn adam_cfg(t: &TrainConfig) -> AdamConfig {
    AdamConfig { lr: t.lr, beta1: t.adam_beta1, beta2: t.adam_beta2, eps: t.adam_eps }
}

impl<S: Scalar> Trainer<S> {
    /// Fresh trainer with seed-initialized weights and zeroed moments.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let params = ModelParams::init(&cfg.model, cfg.train.seed)?;
        let opt_g = AdamState::zeros(&params.gen.visit());
        let opt_d = AdamState::zeros(&params.disc.visit());
        Ok(Trainer { cfg, params, opt_g, opt_d, step: 0 })
    }

    /// Steps completed so far (resumes mid-count after `load_state`).
    pub fn steps_done(&self) -> u64 {
        self.step
    }

    /// Index into the sample set for a given step: a fresh seeded shuffle
    /// per epoch, walked in order.
    pub fn sample_index(&self, step: u64, n: usize) -> usize {
        let epoch = step / n as u64;
        let perm = seeded_permutation(self.cfg.train.seed, epoch, n);
        perm[(step % n as u64) as usize]
    }

    fn diverged(&self, msg: String) -> Error {
        Error::Divergence { step: self.step, msg }
    }

    fn check_grads_finite(&self, grads: &[(String, &Tensor<S>)]) -> Result<()> {
        for (path, g) in grads {
            if let Some(i) = g.first_non_finite() {
                return Err(self.diverged(format!(
                    "non-finite gradient for {path} at flat index {i}"
                )));
            }
        }
        Ok(())
    }

    /// One generator update, then (adv_weight > 0) one discriminator
    /// update. All finiteness checks run before any parameter changes, so
    /// on a Divergence error the trainer still holds the pre-step state.
    pub fn train_step(&mut self, sample: &Sample<S>) -> Result<StepStats> {
        let mcfg = self.cfg.model.clone();
        let tcfg = self.cfg.train.clone();
        let opt = adam_cfg(&tcfg);
        let lambda = tcfg.adv_weight;

        let (fake, gen_cache) = panet_forward(&sample.photo, &self.params.gen, &mcfg)?;
        let l2 = euclidean_loss(&fake, &sample.sketch)?.to_f64_lossy();
        if !l2.is_finite() {
            return Err(self.diverged(format!("pixel loss is {l2}")));
        }

        let mut grad_fake = euclidean_loss_backward(&fake, &sample.sketch)?;
        let mut adv_g = 0.0;
        // The discriminator's view of this step's fake, kept for the D
        // update below. Scoring before the G update is deliberate: the D
        // step trains against the fake that produced these scores.
        let mut fake_scored = None;
        if lambda > 0.0 {
            let (d_fake, d_fake_cache) = disc_forward(&fake, &self.params.disc, &mcfg)?;
            adv_g = lsgan_g_loss(&d_fake).to_f64_lossy();
            if !adv_g.is_finite() {
                return Err(self.diverged(format!("adversarial generator loss is {adv_g}")));
            }
            let g_score = lsgan_g_backward(&d_fake)?;
            let (g_input, _) = disc_backward(&self.params.disc, &mcfg, &d_fake_cache, &g_score)?;
            axpy(S::of_f64(lambda), g_input.data(), grad_fake.data_mut());
            fake_scored = Some((d_fake, d_fake_cache));
        }

        let gen_grads = panet_backward(&self.params.gen, &mcfg, &gen_cache, &grad_fake)?;
        self.check_grads_finite(&gen_grads.params.visit())?;

        let mut adv_d = 0.0;
        let mut disc_grads = None;
        if let Some((d_fake, d_fake_cache)) = &fake_scored {
            let (d_real, d_real_cache) = disc_forward(&sample.sketch, &self.params.disc, &mcfg)?;
            let (loss_d, _) = lsgan_losses(&d_real, d_fake)?;
            adv_d = loss_d.to_f64_lossy();
            if !adv_d.is_finite() {
                return Err(self.diverged(format!("discriminator loss is {adv_d}")));
            }
            let (g_real, g_fake) = lsgan_d_backward(&d_real, d_fake)?;
            let (_, mut gd) = disc_backward(&self.params.disc, &mcfg, &d_real_cache, &g_real)?;
            let (_, gd_fake) = disc_backward(&self.params.disc, &mcfg, d_fake_cache, &g_fake)?;
            for ((_, acc), (_, part)) in gd.visit_mut().into_iter().zip(gd_fake.visit()) {
                acc.add_into(part)?;
            }
            self.check_grads_finite(&gd.visit())?;
            disc_grads = Some(gd);
        }

        // Both parameter sets update only after every check has passed.
        adam_step(&mut self.params.gen.visit_mut(), &gen_grads.params.visit(), &mut self.opt_g, &opt)?;
        if let Some(gd) = &disc_grads {
            adam_step(&mut self.params.disc.visit_mut(), &gd.visit(), &mut self.opt_d, &opt)?;
        }

        self.step += 1;
        Ok(StepStats { step: self.step, l2, adv_g, adv_d })
    }

    /// Drive training from the current step up to `cfg.train.steps`,
    /// invoking the callback after every step (for logging and periodic
    /// checkpoints).
    pub fn run<F>(&mut self, samples: &[Sample<S>], mut on_step: F) -> Result<()>
    where
        F: FnMut(&StepStats, &Trainer<S>) -> Result<()>,
    {
        if samples.is_empty() {
            return Err(Error::InvalidParam("training needs at least one sample pair".into()));
        }
        while self.step < self.cfg.train.steps {
            let idx = self.sample_index(self.step, samples.len());
            let stats = self.train_step(&samples[idx])?;
            on_step(&stats, self)?;
        }
        Ok(())
    }

    /// Full resumable state: model parameters, both optimizers' moments and
    /// step counters, and the loop position. Counter values are stored as
    /// f32 scalars, exact up to 2^24 steps.
    pub fn checkpoint_entries(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out: Vec<(String, Tensor<f32>)> = Vec::new();
        for (path, t) in self.params.visit() {
            out.push((path, t.cast::<f32>()));
        }
        for (tag, state) in [("gen", &self.opt_g), ("disc", &self.opt_d)] {
            for slot in &state.slots {
                out.push((format!("opt.m.{}", slot.path), slot.m.cast::<f32>()));
                out.push((format!("opt.v.{}", slot.path), slot.v.cast::<f32>()));
            }
            out.push(counter(&format!("opt.t.{tag}"), state.t));
        }
        out.push(counter("trainer.step", self.step));
        out
    }

    /// Restore everything `checkpoint_entries` saved. Entry digests are the
    /// caller's concern; this checks presence and shapes.
    pub fn load_state(&mut self, entries: &[(String, Tensor<f32>)]) -> Result<()> {
        fill_params_from_entries(&mut self.params, entries)?;
        for (tag, state) in [("gen", &mut self.opt_g), ("disc", &mut self.opt_d)] {
            for slot in state.slots.iter_mut() {
                slot.m = find_tensor(entries, &format!("opt.m.{}", slot.path), slot.m.shape())?;
                slot.v = find_tensor(entries, &format!("opt.v.{}", slot.path), slot.v.shape())?;
            }
            state.t = read_counter(entries, &format!("opt.t.{tag}"))?;
        }
        self.step = read_counter(entries, "trainer.step")?;
        Ok(())
    }
}

fn counter(name: &str, v: u64) -> (String, Tensor<f32>) {
    (name.to_string(), Tensor::from_vec(&[1], vec![v as f32]).expect("scalar tensor"))
}

fn read_counter(entries: &[(String, Tensor<f32>)], name: &str) -> Result<u64> {
    let t = entries
        .iter()
        .find(|(p, _)| p == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::CheckpointError(format!("checkpoint has no entry for {name}")))?;
    let v = t.data()[0];
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0) {
        return Err(Error::CheckpointError(format!("{name} holds {v}, not a step count")));
    }
    Ok(v as u64)
}

fn find_tensor<S: Scalar>(
    entries: &[(String, Tensor<f32>)],
    name: &str,
    shape: &[usize],
) -> Result<Tensor<S>> {
    let t = entries
        .iter()
        .find(|(p, _)| p == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::CheckpointError(format!("checkpoint has no entry for {name}")))?;
    if t.shape() != shape {
        return Err(Error::CheckpointError(format!(
            "{name}: checkpoint shape {:?} does not match expected {:?}",
            t.shape(),
            shape
        )));
    }
    Ok(t.cast::<S>())
}
