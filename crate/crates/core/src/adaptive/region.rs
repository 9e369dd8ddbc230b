//! Axis-aligned region grids. A grid of n splits an axis of length h at
//! floor(i * h / n), giving n contiguous spans whose lengths differ by at
//! most one; regions are enumerated row-major.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Span of region i on an axis of length `len` under an n-way grid.
#[inline]
pub fn region_span(i: usize, len: usize, n: usize) -> (usize, usize) {
    (i * len / n, (i + 1) * len / n)
}

/// Cut a C x H x W map into an n x n grid of C x h_i x w_j regions,
/// row-major. Requires H >= n and W >= n so every region is nonempty.
pub fn region_partition<S: Scalar>(x: &Tensor<S>, grid: usize) -> Result<Vec<Tensor<S>>> {
    if grid == 0 {
        return Err(Error::InvalidParam("region grid must be positive".into()));
    }
    let (c, h, w) = x.dims3()?;
    if h < grid || w < grid {
        return Err(Error::InvalidParam(format!(
            "cannot split a {h}x{w} map into a {grid}x{grid} region grid"
        )));
    }
    let mut regions = Vec::with_capacity(grid * grid);
    for ri in 0..grid {
        let (y0, y1) = region_span(ri, h, grid);
        for rj in 0..grid {
            let (x0, x1) = region_span(rj, w, grid);
            let (rh, rw) = (y1 - y0, x1 - x0);
            let mut r = Tensor::zeros(&[c, rh, rw])?;
            for ci in 0..c {
                for y in 0..rh {
                    let src = (ci * h + y0 + y) * w + x0;
                    let dst = (ci * rh + y) * rw;
                    r.data_mut()[dst..dst + rw].copy_from_slice(&x.data()[src..src + rw]);
                }
            }
            regions.push(r);
        }
    }
    Ok(regions)
}

/// Inverse of [`region_partition`]: place row-major regions back onto a
/// C x H x W canvas. The regions' channel counts must agree; their sizes
/// must reproduce the grid spans exactly.
pub fn region_reassemble<S: Scalar>(
    regions: &[Tensor<S>],
    grid: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<S>> {
    if grid == 0 || regions.len() != grid * grid {
        return Err(Error::InvalidParam(format!(
            "reassemble: expected {} regions for a {grid}x{grid} grid, got {}",
            grid * grid,
            regions.len()
        )));
    }
    let (c, _, _) = regions[0].dims3()?;
    let mut out = Tensor::zeros(&[c, h, w])?;
    for ri in 0..grid {
        let (y0, y1) = region_span(ri, h, grid);
        for rj in 0..grid {
            let (x0, x1) = region_span(rj, w, grid);
            let r = &regions[ri * grid + rj];
            let (rc, rh, rw) = r.dims3()?;
            if rc != c || rh != y1 - y0 || rw != x1 - x0 {
                return Err(Error::ShapeMismatch(format!(
                    "reassemble: region ({ri},{rj}) is {:?}, grid expects [{c}, {}, {}]",
                    r.shape(),
                    y1 - y0,
                    x1 - x0
                )));
            }
            for ci in 0..c {
                for y in 0..rh {
                    let dst = (ci * h + y0 + y) * w + x0;
                    let src = (ci * rh + y) * rw;
                    out.data_mut()[dst..dst + rw].copy_from_slice(&r.data()[src..src + rw]);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::randn_seeded;
    use proptest::prelude::*;

    #[test]
    fn spans_tile_and_differ_by_at_most_one() {
        for (len, n) in [(13usize, 4usize), (64, 3), (64, 5), (7, 7), (100, 1)] {
            let mut total = 0;
            let (mut min_l, mut max_l) = (usize::MAX, 0);
            let mut prev_end = 0;
            for i in 0..n {
                let (lo, hi) = region_span(i, len, n);
                assert_eq!(lo, prev_end, "spans must be contiguous");
                assert!(hi > lo, "span {i} empty for len {len} n {n}");
                total += hi - lo;
                min_l = min_l.min(hi - lo);
                max_l = max_l.max(hi - lo);
                prev_end = hi;
            }
            assert_eq!(total, len);
            assert!(max_l - min_l <= 1, "len {len} n {n}: sizes {min_l}..{max_l}");
        }
    }

    #[test]
    fn partition_extracts_expected_blocks() {
        // 1 channel, 4x4, 2x2 grid: regions are the quadrants.
        let x = Tensor::from_fn(&[1, 4, 4], |i| i as f64).unwrap();
        let regions = region_partition(&x, 2).unwrap();
        assert_eq!(regions.len(), 4);
        assert_eq!(regions[0].data(), &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(regions[1].data(), &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(regions[3].data(), &[10.0, 11.0, 14.0, 15.0]);
    }

    #[test]
    fn grid_larger_than_map_rejected() {
        let x: Tensor<f64> = Tensor::zeros(&[1, 2, 5]).unwrap();
        assert!(matches!(region_partition(&x, 3), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn reassemble_validates_region_shapes() {
        let x: Tensor<f64> = randn_seeded(&[2, 5, 5], 1.0, 61).unwrap();
        let mut regions = region_partition(&x, 2).unwrap();
        regions[1] = Tensor::zeros(&[2, 3, 3]).unwrap();
        assert!(matches!(
            region_reassemble(&regions, 2, 5, 5),
            Err(Error::ShapeMismatch(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn partition_reassemble_round_trip(
            c in 1usize..4,
            h in 1usize..24,
            w in 1usize..24,
            grid in 1usize..6,
        ) {
            prop_assume!(h >= grid && w >= grid);
            let x: Tensor<f64> = randn_seeded(&[c, h, w], 1.0, (c * 1000 + h * 10 + w) as u64).unwrap();
            let regions = region_partition(&x, grid).unwrap();
            prop_assert_eq!(regions.len(), grid * grid);
            let back = region_reassemble(&regions, grid, h, w).unwrap();
            prop_assert_eq!(back.data(), x.data());
        }
    }
}
