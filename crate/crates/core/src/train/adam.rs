//! Adam with bias correction, keyed to the parameter registry.
//!
//! The update refuses to run if any gradient is non-finite, leaving
//! parameters and moments untouched, so a diverging run can always be
//! checkpointed at its last good state.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamSlot<S> {
    pub path: String,
    pub m: Tensor<S>,
    pub v: Tensor<S>,
}

/// Moments for a parameter set, in registry order, plus the shared step
/// counter (incremented before bias correction).
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub slots: Vec<AdamSlot<S>>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn zeros(pairs: &[(String, &Tensor<S>)]) -> Self {
        AdamState {
            slots: pairs
                .iter()
                .map(|(path, t)| AdamSlot {
                    path: path.clone(),
                    m: t.zeros_like(),
                    v: t.zeros_like(),
                })
                .collect(),
            t: 0,
        }
    }
}

/// One Adam update over aligned (path, tensor) lists. Params, grads, and
/// state must name the same paths in the same order.
pub fn adam_step<S: Scalar>(
    params: &mut [(String, &mut Tensor<S>)],
    grads: &[(String, &Tensor<S>)],
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.slots.len() {
        return Err(Error::OptimizerError(format!(
            "adam: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.slots.len()
        )));
    }
    for ((pp, pt), ((gp, gt), slot)) in params.iter().zip(grads.iter().zip(&state.slots)) {
        if pp != gp || pp != &slot.path {
            return Err(Error::OptimizerError(format!(
                "adam: misaligned entries (param {pp}, grad {gp}, state {})",
                slot.path
            )));
        }
        if pt.shape() != gt.shape() || pt.shape() != slot.m.shape() {
            return Err(Error::OptimizerError(format!(
                "adam: {pp} shapes disagree (param {:?}, grad {:?}, moment {:?})",
                pt.shape(),
                gt.shape(),
                slot.m.shape()
            )));
        }
        // All-or-nothing: reject before mutating anything.
        if let Some(i) = gt.first_non_finite() {
            return Err(Error::OptimizerError(format!(
                "adam: non-finite gradient for {gp} at flat index {i}; step aborted"
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let b1 = S::of_f64(cfg.beta1);
    let b2 = S::of_f64(cfg.beta2);
    let one_m_b1 = S::of_f64(1.0 - cfg.beta1);
    let one_m_b2 = S::of_f64(1.0 - cfg.beta2);
    let m_corr = S::of_f64(1.0 / (1.0 - cfg.beta1.powi(t)));
    let v_corr = S::of_f64(1.0 / (1.0 - cfg.beta2.powi(t)));
    let lr = S::of_f64(cfg.lr);
    let eps = S::of_f64(cfg.eps);

    for (((_, pt), (_, grad)), slot) in params.iter_mut().zip(grads).zip(&mut state.slots) {
        for ((p, g), (m, v)) in pt
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(slot.m.data_mut().iter_mut().zip(slot.v.data_mut()))
        {
            *m = b1 * *m + one_m_b1 * *g;
            *v = b2 * *v + one_m_b2 * *g * *g;
            let mhat = *m * m_corr;
            let vhat = *v * v_corr;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
