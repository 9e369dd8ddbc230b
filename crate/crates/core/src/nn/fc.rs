//! Grouped fully-connected layers. Group g maps input slice
//! [g*in_pg, (g+1)*in_pg) to output slice [g*out_pg, (g+1)*out_pg); there is
//! no cross-group mixing, which is what keeps the filter generators small.

use crate::error::{Error, Result};
use crate::rng::randn_seeded;
use crate::scalar::{axpy, dot, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcSpec {
    pub in_features: usize,
    pub out_features: usize,
    pub groups: usize,
}

impl FcSpec {
    pub fn new(in_features: usize, out_features: usize, groups: usize) -> Result<Self> {
        let spec = FcSpec { in_features, out_features, groups };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_features == 0 || self.out_features == 0 || self.groups == 0 {
            return Err(Error::InvalidParam("grouped fc: all dims must be positive".into()));
        }
        if self.in_features % self.groups != 0 || self.out_features % self.groups != 0 {
            return Err(Error::InvalidParam(format!(
                "grouped fc: groups {} must divide in {} and out {}",
                self.groups, self.in_features, self.out_features
            )));
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_features / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_features / self.groups
    }

    /// groups x out_per_group x in_per_group.
    pub fn weight_shape(&self) -> [usize; 3] {
        [self.groups, self.out_per_group(), self.in_per_group()]
    }

    pub fn weight_count(&self) -> usize {
        self.groups * self.out_per_group() * self.in_per_group()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcParams<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

impl<S: Scalar> FcParams<S> {
    pub fn zeros(spec: &FcSpec) -> Result<Self> {
        Ok(FcParams {
            weight: Tensor::zeros(&spec.weight_shape())?,
            bias: Tensor::zeros(&[spec.out_features])?,
        })
    }

    pub fn init(spec: &FcSpec, std: f64, seed: u64) -> Result<Self> {
        Ok(FcParams {
            weight: randn_seeded(&spec.weight_shape(), std, seed)?,
            bias: Tensor::zeros(&[spec.out_features])?,
        })
    }

    pub fn zeros_like(&self) -> Self {
        FcParams { weight: self.weight.zeros_like(), bias: self.bias.zeros_like() }
    }
}

fn check_fc<S: Scalar>(x: &Tensor<S>, p: &FcParams<S>, spec: &FcSpec) -> Result<()> {
    if x.shape() != [spec.in_features] {
        return Err(Error::ShapeMismatch(format!(
            "grouped fc: input shape {:?}, spec expects [{}]",
            x.shape(),
            spec.in_features
        )));
    }
    check_fc_params(p, spec)
}

fn check_fc_params<S: Scalar>(p: &FcParams<S>, spec: &FcSpec) -> Result<()> {
    spec.validate()?;
    if p.weight.shape() != spec.weight_shape() {
        return Err(Error::ShapeMismatch(format!(
            "grouped fc: weight shape {:?}, spec expects {:?}",
            p.weight.shape(),
            spec.weight_shape()
        )));
    }
    if p.bias.shape() != [spec.out_features] {
        return Err(Error::ShapeMismatch(format!(
            "grouped fc: bias shape {:?}, spec expects [{}]",
            p.bias.shape(),
            spec.out_features
        )));
    }
    Ok(())
}

pub fn grouped_fc<S: Scalar>(x: &Tensor<S>, p: &FcParams<S>, spec: &FcSpec) -> Result<Tensor<S>> {
    check_fc(x, p, spec)?;
    let (ipg, opg) = (spec.in_per_group(), spec.out_per_group());
    let mut out = Tensor::zeros(&[spec.out_features])?;
    for g in 0..spec.groups {
        let x_g = &x.data()[g * ipg..(g + 1) * ipg];
        for o in 0..opg {
            let w_row = &p.weight.data()[(g * opg + o) * ipg..(g * opg + o + 1) * ipg];
            out.data_mut()[g * opg + o] = dot(w_row, x_g) + p.bias.data()[g * opg + o];
        }
    }
    Ok(out)
}

/// Row-batched [`grouped_fc`]: `xs` is rows x in_features, output rows x
/// out_features. Each weight row is loaded once and applied to every input
/// row, so weight traffic does not grow with the row count. Per element the
/// arithmetic is the same dot-plus-bias as the single-row path, in the same
/// order, so outputs are bitwise identical to row-by-row calls.
pub fn grouped_fc_multi<S: Scalar>(
    xs: &Tensor<S>,
    p: &FcParams<S>,
    spec: &FcSpec,
) -> Result<Tensor<S>> {
    let (rows, in_f) = xs.dims2()?;
    if in_f != spec.in_features {
        return Err(Error::ShapeMismatch(format!(
            "grouped fc: input rows have {in_f} features, spec expects {}",
            spec.in_features
        )));
    }
    if rows == 0 {
        return Err(Error::InvalidShape("grouped fc: zero rows".into()));
    }
    check_fc_params(p, spec)?;
    let (ipg, opg) = (spec.in_per_group(), spec.out_per_group());
    let out_f = spec.out_features;
    let mut out = Tensor::zeros(&[rows, out_f])?;
    for g in 0..spec.groups {
        for o in 0..opg {
            let w_row = &p.weight.data()[(g * opg + o) * ipg..(g * opg + o + 1) * ipg];
            let b = p.bias.data()[g * opg + o];
            for r in 0..rows {
                let x_g = &xs.data()[r * in_f + g * ipg..r * in_f + (g + 1) * ipg];
                out.data_mut()[r * out_f + g * opg + o] = dot(w_row, x_g) + b;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FcGrads<S> {
    pub input: Tensor<S>,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

pub fn grouped_fc_backward<S: Scalar>(
    x: &Tensor<S>,
    p: &FcParams<S>,
    spec: &FcSpec,
    grad_out: &Tensor<S>,
) -> Result<FcGrads<S>> {
    check_fc(x, p, spec)?;
    if grad_out.shape() != [spec.out_features] {
        return Err(Error::ShapeMismatch(format!(
            "grouped fc backward: grad shape {:?}, expected [{}]",
            grad_out.shape(),
            spec.out_features
        )));
    }
    let (ipg, opg) = (spec.in_per_group(), spec.out_per_group());
    let mut grads = FcGrads {
        input: x.zeros_like(),
        weight: p.weight.zeros_like(),
        bias: grad_out.clone(),
    };
    for g in 0..spec.groups {
        let x_g = &x.data()[g * ipg..(g + 1) * ipg];
        let gx_g = &mut grads.input.data_mut()[g * ipg..(g + 1) * ipg];
        for o in 0..opg {
            let go = grad_out.data()[g * opg + o];
            let row = (g * opg + o) * ipg;
            axpy(go, x_g, &mut grads.weight.data_mut()[row..row + ipg]);
            axpy(go, &p.weight.data()[row..row + ipg], gx_g);
        }
    }
    Ok(grads)
}

/// Row-batched [`grouped_fc_backward`]. `xs` and `grad_out` are row stacks;
/// the input gradient comes back as a matching stack while the weight and
/// bias gradients are summed over rows directly into `acc` (row-ascending,
/// so the result is bitwise the sum of per-row backward calls). Weight and
/// gradient rows are each traversed once per call, not once per input row.
pub fn grouped_fc_multi_backward<S: Scalar>(
    xs: &Tensor<S>,
    p: &FcParams<S>,
    spec: &FcSpec,
    grad_out: &Tensor<S>,
    acc: &mut FcParams<S>,
) -> Result<Tensor<S>> {
    let (rows, in_f) = xs.dims2()?;
    if in_f != spec.in_features || grad_out.shape() != [rows, spec.out_features] {
        return Err(Error::ShapeMismatch(format!(
            "grouped fc backward: rows {:?} with grad {:?}, spec {}->{}",
            xs.shape(),
            grad_out.shape(),
            spec.in_features,
            spec.out_features
        )));
    }
    check_fc_params(p, spec)?;
    check_fc_params(acc, spec)?;
    let (ipg, opg) = (spec.in_per_group(), spec.out_per_group());
    let out_f = spec.out_features;
    let mut grad_x = xs.zeros_like();
    for g in 0..spec.groups {
        for o in 0..opg {
            let row = (g * opg + o) * ipg;
            let w_row = &p.weight.data()[row..row + ipg];
            let gw_row = &mut acc.weight.data_mut()[row..row + ipg];
            let mut gb = acc.bias.data()[g * opg + o];
            for r in 0..rows {
                let go = grad_out.data()[r * out_f + g * opg + o];
                let x_g = &xs.data()[r * in_f + g * ipg..r * in_f + (g + 1) * ipg];
                let gx_g = &mut grad_x.data_mut()[r * in_f + g * ipg..r * in_f + (g + 1) * ipg];
                axpy(go, x_g, gw_row);
                axpy(go, w_row, gx_g);
                gb = gb + go;
            }
            acc.bias.data_mut()[g * opg + o] = gb;
        }
    }
    Ok(grad_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradcheck, GradCheckConfig};

    #[test]
    fn param_count_matches_grouping_arithmetic() {
        // Example sizes from the filter generator's first layer: a 32-group
        // 65536 -> 256 map carries 32 * 8 * 2048 = 524,288 weights.
        let spec = FcSpec::new(65536, 256, 32).unwrap();
        assert_eq!(spec.weight_count(), 524_288);
        assert_eq!(spec.weight_shape(), [32, 8, 2048]);
        // Dense equivalent would be 16,777,216.
        assert_eq!(spec.in_features * spec.out_features, 16_777_216);
    }

    #[test]
    fn non_divisible_groups_rejected() {
        assert!(matches!(FcSpec::new(10, 4, 3), Err(Error::InvalidParam(_))));
        assert!(matches!(FcSpec::new(9, 4, 3), Err(Error::InvalidParam(_))));
        assert!(FcSpec::new(9, 6, 3).is_ok());
    }

    #[test]
    fn groups_do_not_mix() {
        // With 2 groups, zeroing the second half of the input must not change
        // the first half of the output.
        let spec = FcSpec::new(8, 4, 2).unwrap();
        let p = FcParams::init(&spec, 1.0, 3).unwrap();
        let x: Tensor<f64> = crate::rng::randn_seeded(&[8], 1.0, 4).unwrap();
        let y_full = grouped_fc(&x, &p, &spec).unwrap();
        let mut x2 = x.clone();
        for v in &mut x2.data_mut()[4..] {
            *v = 0.0;
        }
        let y_half = grouped_fc(&x2, &p, &spec).unwrap();
        assert_eq!(y_full.data()[..2], y_half.data()[..2]);
        assert_ne!(y_full.data()[2..], y_half.data()[2..]);
    }

    #[test]
    fn matches_dense_oracle_on_block_diagonal() {
        // A grouped FC is a dense FC with a block-diagonal weight matrix.
        let spec = FcSpec::new(6, 4, 2).unwrap();
        let p = FcParams::init(&spec, 1.0, 11).unwrap();
        let x: Tensor<f64> = crate::rng::randn_seeded(&[6], 1.0, 12).unwrap();
        let y = grouped_fc(&x, &p, &spec).unwrap();
        // Dense oracle.
        let (ipg, opg) = (3, 2);
        let mut dense = vec![0.0f64; 4 * 6];
        for g in 0..2 {
            for o in 0..opg {
                for i in 0..ipg {
                    dense[(g * opg + o) * 6 + g * ipg + i] = p.weight.data()[(g * opg + o) * ipg + i];
                }
            }
        }
        for o in 0..4 {
            let mut acc = p.bias.data()[o];
            for i in 0..6 {
                acc += dense[o * 6 + i] * x.data()[i];
            }
            assert!((acc - y.data()[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_row_matches_single_row_bitwise() {
        let spec = FcSpec::new(12, 8, 4).unwrap();
        let mut p = FcParams::init(&spec, 0.7, 31).unwrap();
        p.bias = crate::rng::randn_seeded(&[8], 0.5, 32).unwrap();
        let rows = 5;
        let xs: Tensor<f64> = crate::rng::randn_seeded(&[rows, 12], 1.0, 33).unwrap();
        let gs: Tensor<f64> = crate::rng::randn_seeded(&[rows, 8], 1.0, 34).unwrap();

        let ys = grouped_fc_multi(&xs, &p, &spec).unwrap();
        let mut acc = p.zeros_like();
        let gxs = grouped_fc_multi_backward(&xs, &p, &spec, &gs, &mut acc).unwrap();

        // Reference: per-row calls, parameter grads summed row-ascending.
        let mut ref_acc = p.zeros_like();
        for r in 0..rows {
            let x = Tensor::from_vec(&[12], xs.data()[r * 12..(r + 1) * 12].to_vec()).unwrap();
            let g = Tensor::from_vec(&[8], gs.data()[r * 8..(r + 1) * 8].to_vec()).unwrap();
            let y = grouped_fc(&x, &p, &spec).unwrap();
            for (a, b) in y.data().iter().zip(&ys.data()[r * 8..(r + 1) * 8]) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            let grads = grouped_fc_backward(&x, &p, &spec, &g).unwrap();
            for (a, b) in grads.input.data().iter().zip(&gxs.data()[r * 12..(r + 1) * 12]) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            for (d, s) in ref_acc.weight.data_mut().iter_mut().zip(grads.weight.data()) {
                *d += *s;
            }
            for (d, s) in ref_acc.bias.data_mut().iter_mut().zip(grads.bias.data()) {
                *d += *s;
            }
        }
        for (a, b) in ref_acc.weight.data().iter().zip(acc.weight.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in ref_acc.bias.data().iter().zip(acc.bias.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn fc_gradcheck() {
        let spec = FcSpec::new(12, 8, 4).unwrap();
        let mut p = FcParams::init(&spec, 0.7, 21).unwrap();
        p.bias = crate::rng::randn_seeded(&[8], 0.5, 22).unwrap();
        let x: Tensor<f64> = crate::rng::randn_seeded(&[12], 1.0, 23).unwrap();
        let inputs = vec![x, p.weight.clone(), p.bias.clone()];
        let fwd = |xs: &[Tensor<f64>]| {
            let p = FcParams { weight: xs[1].clone(), bias: xs[2].clone() };
            grouped_fc(&xs[0], &p, &spec)
        };
        let bwd = |xs: &[Tensor<f64>], g: &Tensor<f64>| {
            let p = FcParams { weight: xs[1].clone(), bias: xs[2].clone() };
            let grads = grouped_fc_backward(&xs[0], &p, &spec, g)?;
            Ok(vec![grads.input, grads.weight, grads.bias])
        };
        let report = gradcheck(
            &fwd,
            &bwd,
            &inputs,
            &["input", "weight", "bias"],
            &GradCheckConfig { tol: 1e-6, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed(), "{}", report.format_table());
    }
}
