//! Filter generator: reduces a region of any size to a fixed pyramid-pooled
//! descriptor, then maps it through three grouped FC layers (ReLU between)
//! to the coefficients of a region-specific convolution filter.

use crate::error::{Error, Result};
use crate::nn::fc::{
    grouped_fc, grouped_fc_backward, grouped_fc_multi, grouped_fc_multi_backward, FcParams, FcSpec,
};
use crate::nn::pool::{spp_pool, spp_pool_backward, PoolMode};
use crate::scalar::Scalar;
use crate::tensor::{relu, relu_backward, Tensor};

use super::adaptive_conv::GeneratedFilter;

/// Size contract of one generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSpec {
    /// Channels of the incoming region (and of the generated filter input).
    pub in_channels: usize,
    /// Output channels of the generated filter.
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub spp_bins: usize,
    pub fc1_out: usize,
    pub fc2_out: usize,
    /// Group counts of the three FC layers.
    pub groups: (usize, usize, usize),
    /// Reduction used by the pyramid pooling.
    pub pool: PoolMode,
}

impl GenSpec {
    /// Pooled descriptor length: in_channels * bins^2.
    pub fn spp_features(&self) -> usize {
        self.in_channels * self.spp_bins * self.spp_bins
    }

    /// Generated filter coefficient count: in * kh * kw * out.
    pub fn filter_len(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1 * self.out_channels
    }

    pub fn fc_specs(&self) -> Result<(FcSpec, FcSpec, FcSpec)> {
        Ok((
            FcSpec::new(self.spp_features(), self.fc1_out, self.groups.0)?,
            FcSpec::new(self.fc1_out, self.fc2_out, self.groups.1)?,
            FcSpec::new(self.fc2_out, self.filter_len(), self.groups.2)?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.0 % 2 == 0 || self.kernel.1 % 2 == 0 {
            return Err(Error::InvalidParam(format!(
                "generator kernel must be odd, got {:?}",
                self.kernel
            )));
        }
        if self.spp_bins == 0 {
            return Err(Error::InvalidParam("generator spp_bins must be positive".into()));
        }
        self.fc_specs().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams<S> {
    pub fc1: FcParams<S>,
    pub fc2: FcParams<S>,
    pub fc3: FcParams<S>,
}

impl<S: Scalar> GenParams<S> {
    pub fn zeros(spec: &GenSpec) -> Result<Self> {
        let (s1, s2, s3) = spec.fc_specs()?;
        Ok(GenParams {
            fc1: FcParams::zeros(&s1)?,
            fc2: FcParams::zeros(&s2)?,
            fc3: FcParams::zeros(&s3)?,
        })
    }

    /// Weights N(0, std^2); the three layers draw from consecutive seeds.
    pub fn init(spec: &GenSpec, std: f64, seed: u64) -> Result<Self> {
        let (s1, s2, s3) = spec.fc_specs()?;
        Ok(GenParams {
            fc1: FcParams::init(&s1, std, seed)?,
            fc2: FcParams::init(&s2, std, seed + 1)?,
            fc3: FcParams::init(&s3, std, seed + 2)?,
        })
    }

    pub fn zeros_like(&self) -> Self {
        GenParams {
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
            fc3: self.fc3.zeros_like(),
        }
    }

    /// Elementwise accumulate (for summing gradients across regions).
    pub fn accumulate(&mut self, other: &GenParams<S>) {
        for (dst, src) in [
            (&mut self.fc1.weight, &other.fc1.weight),
            (&mut self.fc1.bias, &other.fc1.bias),
            (&mut self.fc2.weight, &other.fc2.weight),
            (&mut self.fc2.bias, &other.fc2.bias),
            (&mut self.fc3.weight, &other.fc3.weight),
            (&mut self.fc3.bias, &other.fc3.bias),
        ] {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d = *d + *s;
            }
        }
    }
}

/// Intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct WgenCache<S> {
    /// Flattened pyramid-pooled descriptor.
    pub spp_flat: Tensor<S>,
    /// Pre-ReLU outputs of the first two FC layers.
    pub fc1_pre: Tensor<S>,
    pub fc2_pre: Tensor<S>,
}

/// Generate a filter from a region. The filter size depends only on the
/// spec, never on the region's spatial size.
pub fn weight_generator<S: Scalar>(
    region: &Tensor<S>,
    p: &GenParams<S>,
    spec: &GenSpec,
) -> Result<(GeneratedFilter<S>, WgenCache<S>)> {
    spec.validate()?;
    let (c, _, _) = region.dims3()?;
    if c != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "weight generator: region has {c} channels, spec expects {}",
            spec.in_channels
        )));
    }
    let (s1, s2, s3) = spec.fc_specs()?;
    let spp = spp_pool(region, spec.spp_bins, spec.pool)?;
    let spp_flat = spp.reshape(&[spec.spp_features()])?;
    let fc1_pre = grouped_fc(&spp_flat, &p.fc1, &s1)?;
    let h1 = relu(&fc1_pre);
    let fc2_pre = grouped_fc(&h1, &p.fc2, &s2)?;
    let h2 = relu(&fc2_pre);
    let flat = grouped_fc(&h2, &p.fc3, &s3)?;
    let filter = GeneratedFilter::from_flat(&flat, spec.in_channels, spec.kernel, spec.out_channels)?;
    Ok((filter, WgenCache { spp_flat, fc1_pre, fc2_pre }))
}

/// Row-stacked intermediates for a whole region set.
#[derive(Debug, Clone)]
pub struct WgenMultiCache<S> {
    /// Pooled descriptors, one row per region.
    pub spp_flat: Tensor<S>,
    pub fc1_pre: Tensor<S>,
    pub fc2_pre: Tensor<S>,
}

/// [`weight_generator`] over every region of a branch at once. The FC layers
/// run row-batched so the shared weights are read once per call instead of
/// once per region; each generated filter is bitwise what the single-region
/// path produces.
pub fn weight_generator_multi<S: Scalar>(
    regions: &[Tensor<S>],
    p: &GenParams<S>,
    spec: &GenSpec,
) -> Result<(Vec<GeneratedFilter<S>>, WgenMultiCache<S>)> {
    spec.validate()?;
    let rows = regions.len();
    if rows == 0 {
        return Err(Error::InvalidParam("weight generator: no regions".into()));
    }
    let feats = spec.spp_features();
    let mut spp_flat = Tensor::zeros(&[rows, feats])?;
    for (r, region) in regions.iter().enumerate() {
        let (c, _, _) = region.dims3()?;
        if c != spec.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "weight generator: region has {c} channels, spec expects {}",
                spec.in_channels
            )));
        }
        let spp = spp_pool(region, spec.spp_bins, spec.pool)?;
        spp_flat.data_mut()[r * feats..(r + 1) * feats].copy_from_slice(spp.data());
    }
    let (s1, s2, s3) = spec.fc_specs()?;
    let fc1_pre = grouped_fc_multi(&spp_flat, &p.fc1, &s1)?;
    let h1 = relu(&fc1_pre);
    let fc2_pre = grouped_fc_multi(&h1, &p.fc2, &s2)?;
    let h2 = relu(&fc2_pre);
    let flat = grouped_fc_multi(&h2, &p.fc3, &s3)?;
    let flen = spec.filter_len();
    let mut filters = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = Tensor::from_vec(&[flen], flat.data()[r * flen..(r + 1) * flen].to_vec())?;
        filters.push(GeneratedFilter::from_flat(
            &row,
            spec.in_channels,
            spec.kernel,
            spec.out_channels,
        )?);
    }
    Ok((filters, WgenMultiCache { spp_flat, fc1_pre, fc2_pre }))
}

/// Gradients of [`weight_generator_multi`]: per-region gradients come back as
/// a vector; parameter gradients are summed over regions into `acc`
/// (row-ascending, bitwise the sum of single-region backward calls).
pub fn weight_generator_multi_backward<S: Scalar>(
    regions: &[Tensor<S>],
    p: &GenParams<S>,
    spec: &GenSpec,
    cache: &WgenMultiCache<S>,
    grad_filters: &[Tensor<S>],
    acc: &mut GenParams<S>,
) -> Result<Vec<Tensor<S>>> {
    let rows = regions.len();
    if grad_filters.len() != rows || cache.spp_flat.shape()[0] != rows {
        return Err(Error::ShapeMismatch(format!(
            "weight generator backward: {} regions, {} filter grads, {} cached rows",
            rows,
            grad_filters.len(),
            cache.spp_flat.shape()[0]
        )));
    }
    let (s1, s2, s3) = spec.fc_specs()?;
    let flen = spec.filter_len();
    let mut g_flat = Tensor::zeros(&[rows, flen])?;
    for (r, gf) in grad_filters.iter().enumerate() {
        if gf.len() != flen {
            return Err(Error::ShapeMismatch(format!(
                "weight generator backward: filter grad has {} values, expected {flen}",
                gf.len()
            )));
        }
        g_flat.data_mut()[r * flen..(r + 1) * flen].copy_from_slice(gf.data());
    }
    let h2 = relu(&cache.fc2_pre);
    let g3 = grouped_fc_multi_backward(&h2, &p.fc3, &s3, &g_flat, &mut acc.fc3)?;
    let g_fc2_pre = relu_backward(&cache.fc2_pre, &g3)?;
    let h1 = relu(&cache.fc1_pre);
    let g2 = grouped_fc_multi_backward(&h1, &p.fc2, &s2, &g_fc2_pre, &mut acc.fc2)?;
    let g_fc1_pre = relu_backward(&cache.fc1_pre, &g2)?;
    let g1 = grouped_fc_multi_backward(&cache.spp_flat, &p.fc1, &s1, &g_fc1_pre, &mut acc.fc1)?;
    let feats = spec.spp_features();
    let mut grad_regions = Vec::with_capacity(rows);
    for (r, region) in regions.iter().enumerate() {
        let g_spp = Tensor::from_vec(
            &[spec.in_channels, spec.spp_bins, spec.spp_bins],
            g1.data()[r * feats..(r + 1) * feats].to_vec(),
        )?;
        grad_regions.push(spp_pool_backward(region, spec.spp_bins, spec.pool, &g_spp)?);
    }
    Ok(grad_regions)
}

/// Gradients of [`weight_generator`] given the gradient of the generated
/// filter; returns the region gradient and the parameter gradients.
pub fn weight_generator_backward<S: Scalar>(
    region: &Tensor<S>,
    p: &GenParams<S>,
    spec: &GenSpec,
    cache: &WgenCache<S>,
    grad_filter: &Tensor<S>,
) -> Result<(Tensor<S>, GenParams<S>)> {
    let (s1, s2, s3) = spec.fc_specs()?;
    let g_flat = grad_filter.reshape(&[spec.filter_len()])?;
    let h2 = relu(&cache.fc2_pre);
    let g3 = grouped_fc_backward(&h2, &p.fc3, &s3, &g_flat)?;
    let g_fc2_pre = relu_backward(&cache.fc2_pre, &g3.input)?;
    let h1 = relu(&cache.fc1_pre);
    let g2 = grouped_fc_backward(&h1, &p.fc2, &s2, &g_fc2_pre)?;
    let g_fc1_pre = relu_backward(&cache.fc1_pre, &g2.input)?;
    let g1 = grouped_fc_backward(&cache.spp_flat, &p.fc1, &s1, &g_fc1_pre)?;
    let g_spp = g1.input.reshape(&[spec.in_channels, spec.spp_bins, spec.spp_bins])?;
    let grad_region = spp_pool_backward(region, spec.spp_bins, spec.pool, &g_spp)?;
    Ok((
        grad_region,
        GenParams {
            fc1: FcParams { weight: g1.weight, bias: g1.bias },
            fc2: FcParams { weight: g2.weight, bias: g2.bias },
            fc3: FcParams { weight: g3.weight, bias: g3.bias },
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradcheck, GradCheckConfig};
    use crate::rng::randn_seeded;

    pub(crate) fn tiny_spec() -> GenSpec {
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
    fn default_sizes_line_up() {
        let spec = GenSpec {
            in_channels: 64,
            out_channels: 32,
            kernel: (3, 3),
            spp_bins: 32,
            fc1_out: 256,
            fc2_out: 512,
            groups: (32, 16, 16),
            pool: PoolMode::Max,
        };
        assert_eq!(spec.spp_features(), 65_536);
        assert_eq!(spec.filter_len(), 18_432);
        let (s1, s2, s3) = spec.fc_specs().unwrap();
        assert_eq!(s1.weight_count(), 524_288);
        assert_eq!(s2.weight_count(), 8_192);
        assert_eq!(s3.weight_count(), 589_824);
    }

    #[test]
    fn filter_shape_is_region_size_independent() {
        let spec = tiny_spec();
        let p = GenParams::init(&spec, 0.1, 401).unwrap();
        for (h, w) in [(3usize, 3usize), (10, 7), (4, 21)] {
            let region: Tensor<f64> = randn_seeded(&[4, h, w], 1.0, (h * 100 + w) as u64).unwrap();
            let (filter, _) = weight_generator(&region, &p, &spec).unwrap();
            assert_eq!(filter.tensor().shape(), &[4, 3, 3, 2]);
        }
    }

    #[test]
    fn constant_regions_of_any_size_generate_the_same_filter() {
        let spec = tiny_spec();
        let p = GenParams::init(&spec, 0.1, 402).unwrap();
        let r1 = Tensor::filled(&[4, 3, 5], 0.7f64).unwrap();
        let r2 = Tensor::filled(&[4, 12, 9], 0.7f64).unwrap();
        let (f1, _) = weight_generator(&r1, &p, &spec).unwrap();
        let (f2, _) = weight_generator(&r2, &p, &spec).unwrap();
        for (a, b) in f1.tensor().data().iter().zip(f2.tensor().data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn different_content_generates_different_filters() {
        let spec = tiny_spec();
        let p = GenParams::init(&spec, 0.1, 403).unwrap();
        let r1: Tensor<f64> = randn_seeded(&[4, 6, 6], 1.0, 404).unwrap();
        let r2: Tensor<f64> = randn_seeded(&[4, 6, 6], 1.0, 405).unwrap();
        let (f1, _) = weight_generator(&r1, &p, &spec).unwrap();
        let (f2, _) = weight_generator(&r2, &p, &spec).unwrap();
        let diff: f64 = f1
            .tensor()
            .data()
            .iter()
            .zip(f2.tensor().data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-6, "filters unexpectedly identical");
    }

    #[test]
    fn multi_region_matches_single_region_bitwise() {
        let spec = tiny_spec();
        let p = GenParams::init(&spec, 0.4, 420).unwrap();
        let regions: Vec<Tensor<f64>> = (0..4)
            .map(|r| randn_seeded(&[4, 3 + r, 5], 1.0, 421 + r as u64).unwrap())
            .collect();
        let g_filters: Vec<Tensor<f64>> = (0..4)
            .map(|r| randn_seeded(&[spec.filter_len()], 1.0, 430 + r as u64).unwrap())
            .collect();

        let (filters, cache) = weight_generator_multi(&regions, &p, &spec).unwrap();
        let mut acc = p.zeros_like();
        let g_regions =
            weight_generator_multi_backward(&regions, &p, &spec, &cache, &g_filters, &mut acc)
                .unwrap();

        let mut ref_acc = p.zeros_like();
        for (r, region) in regions.iter().enumerate() {
            let (filter, wc) = weight_generator(region, &p, &spec).unwrap();
            for (a, b) in filter.tensor().data().iter().zip(filters[r].tensor().data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            let gf = g_filters[r].reshape(&[4, 3, 3, 2]).unwrap();
            let (g_region, gp) = weight_generator_backward(region, &p, &spec, &wc, &gf).unwrap();
            for (a, b) in g_region.data().iter().zip(g_regions[r].data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            ref_acc.accumulate(&gp);
        }
        for (want, got) in [
            (&ref_acc.fc1.weight, &acc.fc1.weight),
            (&ref_acc.fc1.bias, &acc.fc1.bias),
            (&ref_acc.fc2.weight, &acc.fc2.weight),
            (&ref_acc.fc2.bias, &acc.fc2.bias),
            (&ref_acc.fc3.weight, &acc.fc3.weight),
            (&ref_acc.fc3.bias, &acc.fc3.bias),
        ] {
            for (a, b) in want.data().iter().zip(got.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn wgen_gradcheck() {
        let spec = tiny_spec();
        let p = GenParams::init(&spec, 0.5, 410).unwrap();
        let region: Tensor<f64> = randn_seeded(&[4, 5, 6], 1.0, 411).unwrap();
        let inputs = vec![
            region,
            p.fc1.weight.clone(),
            p.fc1.bias.clone(),
            p.fc2.weight.clone(),
            p.fc2.bias.clone(),
            p.fc3.weight.clone(),
            p.fc3.bias.clone(),
        ];
        let rebuild = |xs: &[Tensor<f64>]| GenParams {
            fc1: FcParams { weight: xs[1].clone(), bias: xs[2].clone() },
            fc2: FcParams { weight: xs[3].clone(), bias: xs[4].clone() },
            fc3: FcParams { weight: xs[5].clone(), bias: xs[6].clone() },
        };
        let fwd = |xs: &[Tensor<f64>]| {
            let (filter, _) = weight_generator(&xs[0], &rebuild(xs), &spec)?;
            Ok(filter.into_tensor())
        };
        let bwd = |xs: &[Tensor<f64>], g: &Tensor<f64>| {
            let p = rebuild(xs);
            let (_, cache) = weight_generator(&xs[0], &p, &spec)?;
            let (g_region, gp) = weight_generator_backward(&xs[0], &p, &spec, &cache, g)?;
            Ok(vec![
                g_region,
                gp.fc1.weight,
                gp.fc1.bias,
                gp.fc2.weight,
                gp.fc2.bias,
                gp.fc3.weight,
                gp.fc3.bias,
            ])
        };
        let report = gradcheck(
            &fwd,
            &bwd,
            &inputs,
            &["region", "fc1.w", "fc1.b", "fc2.w", "fc2.b", "fc3.w", "fc3.b"],
            &GradCheckConfig { tol: 1e-6, max_samples_per_tensor: 120, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed(), "{}", report.format_table());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let spec = tiny_spec();
        let p = GenParams::<f64>::zeros(&spec).unwrap();
        let region: Tensor<f64> = Tensor::zeros(&[3, 5, 5]).unwrap();
        assert!(matches!(
            weight_generator(&region, &p, &spec),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
