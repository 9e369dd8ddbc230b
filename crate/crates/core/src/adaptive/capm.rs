//! Multi-scale region perception: several branches partition the feature map
//! into region grids of different granularity; each region is filtered by a
//! convolution generated from its own content. Generator parameters are
//! shared across regions within a branch but distinct across branches.
//! Branch outputs are concatenated along channels.
//!
//! Region boundaries are fixed in image coordinates, so the module is
//! deliberately not translation-covariant: the same content in a different
//! region can be filtered differently (see the boundary counterexample test).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::adaptive_conv::{adaptive_conv, adaptive_conv_backward, GeneratedFilter};
use super::region::{region_partition, region_reassemble};
use super::wgen::{
    weight_generator_multi, weight_generator_multi_backward, GenParams, GenSpec, WgenMultiCache,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapmSpec {
    /// One region grid per branch, e.g. [3, 4, 5].
    pub grids: Vec<usize>,
    pub gen: GenSpec,
}

impl CapmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grids.is_empty() {
            return Err(Error::InvalidParam(
                "region perception needs at least one branch grid".into(),
            ));
        }
        if self.grids.iter().any(|&g| g == 0) {
            return Err(Error::InvalidParam("branch grids must be positive".into()));
        }
        self.gen.validate()
    }

    pub fn out_channels(&self) -> usize {
        self.grids.len() * self.gen.out_channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapmParams<S> {
    /// One generator per branch, aligned with `CapmSpec::grids`.
    pub branches: Vec<GenParams<S>>,
}

impl<S: Scalar> CapmParams<S> {
    pub fn zeros(spec: &CapmSpec) -> Result<Self> {
        spec.validate()?;
        let mut branches = Vec::with_capacity(spec.grids.len());
        for _ in &spec.grids {
            branches.push(GenParams::zeros(&spec.gen)?);
        }
        Ok(CapmParams { branches })
    }

    pub fn init(spec: &CapmSpec, std: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut branches = Vec::with_capacity(spec.grids.len());
        for (b, _) in spec.grids.iter().enumerate() {
            branches.push(GenParams::init(&spec.gen, std, seed + 16 * b as u64)?);
        }
        Ok(CapmParams { branches })
    }

    pub fn zeros_like(&self) -> Self {
        CapmParams { branches: self.branches.iter().map(|b| b.zeros_like()).collect() }
    }
}

/// Per-region intermediates for one (sample, branch) pair, row-major region
/// order.
#[derive(Debug, Clone)]
pub struct BranchCache<S> {
    pub filters: Vec<GeneratedFilter<S>>,
    pub wgen: WgenMultiCache<S>,
}

#[derive(Debug, Clone)]
pub struct CapmCache<S> {
    /// Indexed [sample][branch].
    pub branches: Vec<Vec<BranchCache<S>>>,
}

fn sample_view<S: Scalar>(x: &Tensor<S>, n: usize) -> Result<Tensor<S>> {
    let (_, c, h, w) = x.dims4()?;
    let plane = c * h * w;
    Tensor::from_vec(&[c, h, w], x.data()[n * plane..(n + 1) * plane].to_vec())
}

fn check_capm<S: Scalar>(
    x: &Tensor<S>,
    params: &CapmParams<S>,
    spec: &CapmSpec,
) -> Result<(usize, usize, usize, usize)> {
    spec.validate()?;
    let (n, c, h, w) = x.dims4()?;
    if c != spec.gen.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "region perception: input has {c} channels, generators expect {}",
            spec.gen.in_channels
        )));
    }
    if params.branches.len() != spec.grids.len() {
        return Err(Error::ShapeMismatch(format!(
            "region perception: {} parameter branches for {} grids",
            params.branches.len(),
            spec.grids.len()
        )));
    }
    for &g in &spec.grids {
        if h < g || w < g {
            return Err(Error::InvalidParam(format!(
                "region perception: {h}x{w} input cannot carry a {g}x{g} grid"
            )));
        }
    }
    Ok((n, c, h, w))
}

/// Forward pass: N x C x H x W to N x (branches * out_channels) x H x W.
pub fn capm_forward<S: Scalar>(
    x: &Tensor<S>,
    params: &CapmParams<S>,
    spec: &CapmSpec,
) -> Result<(Tensor<S>, CapmCache<S>)> {
    let (n, _, h, w) = check_capm(x, params, spec)?;
    let out_c = spec.out_channels();
    let mut out = Tensor::zeros(&[n, out_c, h, w])?;
    let plane = h * w;
    let mut cache = CapmCache { branches: Vec::with_capacity(n) };
    for ni in 0..n {
        let x_n = sample_view(x, ni)?;
        let mut sample_caches = Vec::with_capacity(spec.grids.len());
        for (b, &grid) in spec.grids.iter().enumerate() {
            let regions = region_partition(&x_n, grid)?;
            let (filters, wgen) = weight_generator_multi(&regions, &params.branches[b], &spec.gen)?;
            let mut outputs = Vec::with_capacity(regions.len());
            for (region, filter) in regions.iter().zip(&filters) {
                outputs.push(adaptive_conv(region, filter)?);
            }
            let branch_map = region_reassemble(&outputs, grid, h, w)?;
            let dst_c0 = b * spec.gen.out_channels;
            for oc in 0..spec.gen.out_channels {
                let dst = ((ni * out_c) + dst_c0 + oc) * plane;
                out.data_mut()[dst..dst + plane]
                    .copy_from_slice(&branch_map.data()[oc * plane..(oc + 1) * plane]);
            }
            sample_caches.push(BranchCache { filters, wgen });
        }
        cache.branches.push(sample_caches);
    }
    Ok((out, cache))
}

#[derive(Debug, Clone)]
pub struct CapmGrads<S> {
    pub input: Tensor<S>,
    pub branches: Vec<GenParams<S>>,
}

/// Backward pass: gradients for the input and every branch generator.
pub fn capm_backward<S: Scalar>(
    x: &Tensor<S>,
    params: &CapmParams<S>,
    spec: &CapmSpec,
    cache: &CapmCache<S>,
    grad_out: &Tensor<S>,
) -> Result<CapmGrads<S>> {
    let (n, c, h, w) = check_capm(x, params, spec)?;
    let out_c = spec.out_channels();
    if grad_out.shape() != [n, out_c, h, w] {
        return Err(Error::ShapeMismatch(format!(
            "region perception backward: grad shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, out_c, h, w]
        )));
    }
    if cache.branches.len() != n {
        return Err(Error::InvalidParam("region perception backward: cache/batch mismatch".into()));
    }
    let plane = h * w;
    let mut grads = CapmGrads {
        input: x.zeros_like(),
        branches: params.branches.iter().map(|b| b.zeros_like()).collect(),
    };
    for ni in 0..n {
        let x_n = sample_view(x, ni)?;
        for (b, &grid) in spec.grids.iter().enumerate() {
            let bc = &cache.branches[ni][b];
            // Lift this branch's channel block into a C_out x H x W map.
            let mut g_branch = Tensor::zeros(&[spec.gen.out_channels, h, w])?;
            let src_c0 = b * spec.gen.out_channels;
            for oc in 0..spec.gen.out_channels {
                let src = ((ni * out_c) + src_c0 + oc) * plane;
                g_branch.data_mut()[oc * plane..(oc + 1) * plane]
                    .copy_from_slice(&grad_out.data()[src..src + plane]);
            }
            let regions = region_partition(&x_n, grid)?;
            let g_regions_out = region_partition(&g_branch, grid)?;
            let mut g_regions = Vec::with_capacity(regions.len());
            let mut g_filters = Vec::with_capacity(regions.len());
            for (r, region) in regions.iter().enumerate() {
                let (g_region_conv, g_filter) =
                    adaptive_conv_backward(region, &bc.filters[r], &g_regions_out[r])?;
                g_regions.push(g_region_conv);
                g_filters.push(g_filter);
            }
            let g_regions_gen = weight_generator_multi_backward(
                &regions,
                &params.branches[b],
                &spec.gen,
                &bc.wgen,
                &g_filters,
                &mut grads.branches[b],
            )?;
            for (g_region, g_gen) in g_regions.iter_mut().zip(&g_regions_gen) {
                for (d, s) in g_region.data_mut().iter_mut().zip(g_gen.data()) {
                    *d = *d + *s;
                }
            }
            let g_map = region_reassemble(&g_regions, grid, h, w)?;
            let dst = ni * c * plane;
            for (d, s) in grads.input.data_mut()[dst..dst + c * plane]
                .iter_mut()
                .zip(g_map.data())
            {
                *d = *d + *s;
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::wgen::weight_generator;
    use crate::gradcheck::{gradcheck, GradCheckConfig};
    use crate::nn::pool::PoolMode;
    use crate::rng::randn_seeded;

    fn tiny_gen() -> GenSpec {
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

    #[test]
    fn output_channels_scale_with_branch_count() {
        let spec = CapmSpec { grids: vec![2, 3], gen: tiny_gen() };
        let params = CapmParams::init(&spec, 0.1, 501).unwrap();
        let x: Tensor<f64> = randn_seeded(&[2, 4, 9, 9], 1.0, 502).unwrap();
        let (y, cache) = capm_forward(&x, &params, &spec).unwrap();
        assert_eq!(y.shape(), &[2, 4, 9, 9]);
        assert_eq!(cache.branches.len(), 2);
        assert_eq!(cache.branches[0][0].filters.len(), 4);
        assert_eq!(cache.branches[0][1].filters.len(), 9);
    }

    #[test]
    fn branch_blocks_depend_only_on_their_own_parameters() {
        let spec = CapmSpec { grids: vec![2, 3], gen: tiny_gen() };
        let params = CapmParams::init(&spec, 0.1, 505).unwrap();
        let x: Tensor<f64> = randn_seeded(&[1, 4, 8, 8], 1.0, 506).unwrap();
        let (y0, _) = capm_forward(&x, &params, &spec).unwrap();
        let mut altered = params.clone();
        altered.branches[1].fc3.weight = altered.branches[1].fc3.weight.map(|v| v + 0.05);
        let (y1, _) = capm_forward(&x, &altered, &spec).unwrap();
        let plane = 64;
        // Branch 0 channels (0..2) identical, branch 1 channels (2..4) differ.
        assert_eq!(y0.data()[..2 * plane], y1.data()[..2 * plane]);
        let diff: f64 = y0.data()[2 * plane..]
            .iter()
            .zip(&y1.data()[2 * plane..])
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn matches_direct_per_region_computation() {
        let spec = CapmSpec { grids: vec![2], gen: tiny_gen() };
        let params = CapmParams::init(&spec, 0.1, 510).unwrap();
        let x: Tensor<f64> = randn_seeded(&[1, 4, 7, 9], 1.0, 511).unwrap();
        let (y, _) = capm_forward(&x, &params, &spec).unwrap();
        let x_n = sample_view(&x, 0).unwrap();
        let regions = region_partition(&x_n, 2).unwrap();
        // Region (1, 0): rows 3..7, cols 0..4.
        let (filter, _) = weight_generator(&regions[2], &params.branches[0], &spec.gen).unwrap();
        let expect = adaptive_conv(&regions[2], &filter).unwrap();
        for oc in 0..2 {
            for y_r in 0..4 {
                for x_r in 0..4 {
                    let got = y.data()[y.idx4(0, oc, 3 + y_r, x_r)];
                    let want = expect.data()[(oc * 4 + y_r) * 4 + x_r];
                    assert_eq!(got.to_bits(), want.to_bits());
                }
            }
        }
    }

    #[test]
    fn not_translation_covariant_across_region_boundaries() {
        // The same bright square placed one pixel before and one pixel after
        // a region boundary produces outputs that are not shifted copies of
        // each other: region-local padding and per-region filters break
        // covariance by design.
        let spec = CapmSpec { grids: vec![2], gen: tiny_gen() };
        let params = CapmParams::init(&spec, 0.8, 515).unwrap();
        let mut a: Tensor<f64> = Tensor::zeros(&[1, 4, 8, 8]).unwrap();
        let mut b: Tensor<f64> = Tensor::zeros(&[1, 4, 8, 8]).unwrap();
        for c in 0..4 {
            let ia = a.idx4(0, c, 3, 3);
            a.data_mut()[ia] = 1.0;
            let ib = b.idx4(0, c, 4, 4);
            b.data_mut()[ib] = 1.0;
        }
        let (ya, _) = capm_forward(&a, &params, &spec).unwrap();
        let (yb, _) = capm_forward(&b, &params, &spec).unwrap();
        // If covariant, yb(y, x) == ya(y-1, x-1) wherever both are defined.
        let mut max_diff = 0.0f64;
        let mut max_mag = 0.0f64;
        for oc in 0..2 {
            for y in 1..8 {
                for x in 1..8 {
                    let shifted = ya.data()[ya.idx4(0, oc, y - 1, x - 1)];
                    let direct = yb.data()[yb.idx4(0, oc, y, x)];
                    max_diff = max_diff.max((shifted - direct).abs());
                    max_mag = max_mag.max(shifted.abs()).max(direct.abs());
                }
            }
        }
        assert!(max_mag > 0.0);
        assert!(
            max_diff > 0.05 * max_mag,
            "unexpectedly covariant: diff {max_diff}, mag {max_mag}"
        );
    }

    #[test]
    fn capm_gradcheck() {
        let spec = CapmSpec { grids: vec![2], gen: tiny_gen() };
        let params = CapmParams::init(&spec, 0.5, 520).unwrap();
        let x: Tensor<f64> = randn_seeded(&[1, 4, 6, 6], 1.0, 521).unwrap();
        let b = &params.branches[0];
        let inputs = vec![
            x,
            b.fc1.weight.clone(),
            b.fc1.bias.clone(),
            b.fc2.weight.clone(),
            b.fc2.bias.clone(),
            b.fc3.weight.clone(),
            b.fc3.bias.clone(),
        ];
        let rebuild = |xs: &[Tensor<f64>]| CapmParams {
            branches: vec![GenParams {
                fc1: crate::nn::fc::FcParams { weight: xs[1].clone(), bias: xs[2].clone() },
                fc2: crate::nn::fc::FcParams { weight: xs[3].clone(), bias: xs[4].clone() },
                fc3: crate::nn::fc::FcParams { weight: xs[5].clone(), bias: xs[6].clone() },
            }],
        };
        let fwd = |xs: &[Tensor<f64>]| {
            let (y, _) = capm_forward(&xs[0], &rebuild(xs), &spec)?;
            Ok(y)
        };
        let bwd = |xs: &[Tensor<f64>], g: &Tensor<f64>| {
            let p = rebuild(xs);
            let (_, cache) = capm_forward(&xs[0], &p, &spec)?;
            let grads = capm_backward(&xs[0], &p, &spec, &cache, g)?;
            let gb = &grads.branches[0];
            Ok(vec![
                grads.input,
                gb.fc1.weight.clone(),
                gb.fc1.bias.clone(),
                gb.fc2.weight.clone(),
                gb.fc2.bias.clone(),
                gb.fc3.weight.clone(),
                gb.fc3.bias.clone(),
            ])
        };
        let report = gradcheck(
            &fwd,
            &bwd,
            &inputs,
            &["input", "fc1.w", "fc1.b", "fc2.w", "fc2.b", "fc3.w", "fc3.b"],
            &GradCheckConfig { tol: 1e-6, max_samples_per_tensor: 100, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed(), "{}", report.format_table());
    }

    #[test]
    fn oversized_grid_rejected() {
        let spec = CapmSpec { grids: vec![9], gen: tiny_gen() };
        let params = CapmParams::zeros(&spec).unwrap();
        let x: Tensor<f64> = Tensor::zeros(&[1, 4, 6, 6]).unwrap();
        assert!(matches!(capm_forward(&x, &params, &spec), Err(Error::InvalidParam(_))));
    }
}
