//! Central-difference gradient checking in f64.
//!
//! A random projection turns any tensor-valued op into a scalar loss:
//! loss(x) = sum(forward(x) * r). The analytic gradient of that loss is
//! exactly backward(x, r), so one backward call is compared against two
//! forward calls per checked coordinate.

use crate::error::{Error, Result};
use crate::rng::{mix, randn_seeded, CounterRng};
use crate::scalar::dot;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Max allowed relative error.
    pub tol: f64,
    /// Step is rel_step * max(1, |x|) per coordinate.
    pub rel_step: f64,
    /// Cap on finite-difference evaluations per input tensor; 0 checks every
    /// coordinate. The analytic gradient is always computed in full.
    pub max_samples_per_tensor: usize,
    /// Seed for the projection vector and coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { tol: 1e-4, rel_step: 1e-5, max_samples_per_tensor: 0, seed: 0x5EED }
    }
}

/// Relative error floor: differences below tol * this are treated as noise
/// even when both gradients are near zero.
const SMALL_GRAD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct TensorReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_flat_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tol: f64,
    pub tensors: Vec<TensorReport>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tol
    }

    pub fn format_table(&self) -> String {
        let mut s = format!("{:<28} {:>8} {:>12}  status\n", "tensor", "coords", "max rel err");
        for t in &self.tensors {
            let status = if t.max_rel_err <= self.tol { "ok" } else { "FAIL" };
            s.push_str(&format!(
                "{:<28} {:>8} {:>12.3e}  {}\n",
                t.name, t.checked, t.max_rel_err, status
            ));
        }
        s
    }
}

type ForwardFn<'a> = dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + 'a;
type BackwardFn<'a> = dyn Fn(&[Tensor<f64>], &Tensor<f64>) -> Result<Vec<Tensor<f64>>> + 'a;

/// Check `backward` against central differences of `forward` at `inputs`.
/// `names` labels each input in the report. Fails fast (GradCheckFailure)
/// when the forward output is non-finite, naming the offending index.
pub fn gradcheck(
    forward: &ForwardFn,
    backward: &BackwardFn,
    inputs: &[Tensor<f64>],
    names: &[&str],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if inputs.len() != names.len() {
        return Err(Error::InvalidParam(format!(
            "gradcheck: {} inputs but {} names",
            inputs.len(),
            names.len()
        )));
    }
    let y0 = forward(inputs)?;
    y0.check_finite("gradcheck forward output")?;

    let r: Tensor<f64> = randn_seeded(y0.shape(), 1.0, cfg.seed)?;
    let analytic = backward(inputs, &r)?;
    if analytic.len() != inputs.len() {
        return Err(Error::InvalidParam(format!(
            "gradcheck: backward returned {} gradients for {} inputs",
            analytic.len(),
            inputs.len()
        )));
    }
    for (g, (x, name)) in analytic.iter().zip(inputs.iter().zip(names)) {
        if g.shape() != x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "gradcheck: gradient for {name} has shape {:?}, input has {:?}",
                g.shape(),
                x.shape()
            )));
        }
        g.check_finite(&format!("gradcheck analytic gradient for {name}"))?;
    }

    let loss = |xs: &[Tensor<f64>]| -> Result<f64> {
        let y = forward(xs)?;
        if y.shape() != r.shape() {
            return Err(Error::ShapeMismatch(
                "gradcheck: forward output shape changed under perturbation".into(),
            ));
        }
        Ok(dot(y.data(), r.data()))
    };

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut tensors = Vec::with_capacity(inputs.len());
    for (ti, name) in names.iter().enumerate() {
        let len = inputs[ti].len();
        let indices = sample_indices(len, cfg.max_samples_per_tensor, mix(cfg.seed, ti as u64));
        let mut report = TensorReport {
            name: (*name).to_string(),
            checked: indices.len(),
            max_rel_err: 0.0,
            worst_flat_index: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
        };
        for idx in indices {
            let x0 = work[ti].data()[idx];
            let h = cfg.rel_step * x0.abs().max(1.0);
            work[ti].data_mut()[idx] = x0 + h;
            let lp = loss(&work)?;
            work[ti].data_mut()[idx] = x0 - h;
            let lm = loss(&work)?;
            work[ti].data_mut()[idx] = x0;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic[ti].data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(SMALL_GRAD_FLOOR);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_flat_index = idx;
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
        tensors.push(report);
    }
    Ok(GradCheckReport { tol: cfg.tol, tensors })
}

/// All indices when the cap allows, otherwise `cap` distinct seeded picks in
/// ascending order.
fn sample_indices(len: usize, cap: usize, seed: u64) -> Vec<usize> {
    if cap == 0 || len <= cap {
        return (0..len).collect();
    }
    let mut rng = CounterRng::new(seed);
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < cap {
        picked.insert(rng.below(len));
    }
    picked.into_iter().collect()
}

/// Convenience: run the check and turn any excess error into GradCheckFailure
/// so callers get one error path for "the gradients are wrong".
pub fn require_pass(report: &GradCheckReport) -> Result<()> {
    if report.passed() {
        return Ok(());
    }
    let worst = report
        .tensors
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .expect("report has tensors");
    Err(Error::GradCheckFailure(format!(
        "{}: rel err {:.3e} at flat index {} (analytic {:.6e}, numeric {:.6e}, tol {:.1e})",
        worst.name,
        worst.max_rel_err,
        worst.worst_flat_index,
        worst.analytic_at_worst,
        worst.numeric_at_worst,
        report.tol
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_forward(xs: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        // y = x0^2 + 3 * x1, elementwise.
        let x0 = &xs[0];
        let x1 = &xs[1];
        Tensor::from_fn(x0.shape(), |i| x0.data()[i] * x0.data()[i] + 3.0 * x1.data()[i])
    }

    fn quad_backward(xs: &[Tensor<f64>], g: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        let x0 = &xs[0];
        let g0 = Tensor::from_fn(x0.shape(), |i| 2.0 * x0.data()[i] * g.data()[i])?;
        let g1 = Tensor::from_fn(x0.shape(), |i| 3.0 * g.data()[i])?;
        Ok(vec![g0, g1])
    }

    fn inputs() -> Vec<Tensor<f64>> {
        vec![
            randn_seeded(&[4, 5], 1.0, 21).unwrap(),
            randn_seeded(&[4, 5], 1.0, 22).unwrap(),
        ]
    }

    #[test]
    fn correct_gradient_passes() {
        let report = gradcheck(
            &quad_forward,
            &quad_backward,
            &inputs(),
            &["x0", "x1"],
            &GradCheckConfig { tol: 1e-6, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
        assert!(require_pass(&report).is_ok());
    }

    #[test]
    fn one_percent_scale_error_is_caught() {
        let corrupt = |xs: &[Tensor<f64>], g: &Tensor<f64>| -> Result<Vec<Tensor<f64>>> {
            let mut grads = quad_backward(xs, g)?;
            grads[0] = grads[0].map(|v| v * 1.01);
            Ok(grads)
        };
        let report = gradcheck(
            &quad_forward,
            &corrupt,
            &inputs(),
            &["x0", "x1"],
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!report.passed());
        assert!(report.tensors[0].max_rel_err > 1e-3);
        assert!(report.tensors[1].max_rel_err < 1e-6);
        assert!(matches!(require_pass(&report), Err(Error::GradCheckFailure(_))));
    }

    #[test]
    fn non_finite_forward_is_reported_with_location() {
        let bad = |xs: &[Tensor<f64>]| -> Result<Tensor<f64>> {
            let mut y = quad_forward(xs)?;
            y.data_mut()[7] = f64::INFINITY;
            Ok(y)
        };
        let err = gradcheck(&bad, &quad_backward, &inputs(), &["x0", "x1"], &GradCheckConfig::default())
            .unwrap_err();
        match err {
            Error::GradCheckFailure(msg) => assert!(msg.contains("index 7"), "{msg}"),
            other => panic!("expected GradCheckFailure, got {other:?}"),
        }
    }

    #[test]
    fn sampling_caps_coordinate_count() {
        let cfg = GradCheckConfig { max_samples_per_tensor: 6, ..Default::default() };
        let report = gradcheck(&quad_forward, &quad_backward, &inputs(), &["x0", "x1"], &cfg).unwrap();
        assert!(report.tensors.iter().all(|t| t.checked == 6));
        assert!(report.passed());
    }

    #[test]
    fn sampled_indices_are_distinct_and_sorted() {
        let idx = sample_indices(100, 10, 99);
        assert_eq!(idx.len(), 10);
        for w in idx.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(idx, sample_indices(100, 10, 99));
    }
}
