//! Where does one output pixel look in the input?
//!
//! The decoder runs three deformable convolutions at eighth, quarter, and
//! full resolution. Composing their 3x3 stencils and learned offsets through
//! the x2 upsampling stages gives, for each output pixel, 9^3 = 729 input
//! locations (the ancestry of the pixel). With all offsets zero this
//! collapses to a static pattern: a 7x7 coarse grid with 4-pixel spacing at
//! quarter scale, each node carrying a 3x3 fine stencil.
//!
//! Offsets are looked up at the nearest lattice pixel of their layer, then
//! the composed location is kept continuous; coordinates may leave the image
//! (renderers clip, the math does not).

use crate::adaptive::offset::OffsetField;
use crate::error::{Error, Result};
use crate::model::fapd::fapd_forward;
use crate::model::fce::fce_forward;
use crate::model::params::PanetParams;
use crate::model::ModelConfig;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One ancestry entry: tap `i` of the eighth-scale conv, seen through tap
/// `j` of the quarter-scale conv, seen through tap `k` of the full-scale
/// conv, lands at continuous input location (y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct AncestralTap {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub y: f64,
    pub x: f64,
}

/// Tap index -> (dy, dx) of a 3x3 stencil in row-major order.
fn stencil(t: usize) -> (f64, f64) {
    ((t / 3) as f64 - 1.0, (t % 3) as f64 - 1.0)
}

fn offset_at<S: Scalar>(
    field: Option<&OffsetField<S>>,
    k: usize,
    y: f64,
    x: f64,
) -> (f64, f64) {
    match field {
        None => (0.0, 0.0),
        Some(f) => {
            let (_, _, h, w) = f.tensor().dims4().expect("offset fields are 4-d");
            let yy = y.round().clamp(0.0, (h - 1) as f64) as usize;
            let xx = x.round().clamp(0.0, (w - 1) as f64) as usize;
            (f.dy(0, k, yy, xx).to_f64_lossy(), f.dx(0, k, yy, xx).to_f64_lossy())
        }
    }
}

/// Enumerate all 729 ancestral sampling locations for output pixel
/// (y, x) of the first sample. `zero_offsets` ignores the learned offsets
/// and reports the static composed stencil instead.
pub fn ancestral_sampling_locations<S: Scalar>(
    x: &Tensor<S>,
    params: &PanetParams<S>,
    cfg: &ModelConfig,
    pixel: (usize, usize),
    zero_offsets: bool,
) -> Result<Vec<AncestralTap>> {
    let (_, _, h, w) = x.dims4()?;
    let (py, px) = pixel;
    if py >= h || px >= w {
        return Err(Error::InvalidParam(format!(
            "pixel ({py}, {px}) outside a {h}x{w} input"
        )));
    }
    let (pyr, _) = fce_forward(x, &params.fce, cfg)?;
    let (_, cache) = fapd_forward(&pyr, &params.fapd, cfg)?;
    let (f1, f2, f3) = match (&cache.dc1_field, &cache.dc2_field, &cache.dc3_field) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Error::InvalidParam(
                "sampling ancestry requires the deformable decoder variant".into(),
            ))
        }
    };
    let read = |field: &OffsetField<S>, k: usize, y: f64, x: f64| {
        if zero_offsets {
            (0.0, 0.0)
        } else {
            offset_at(Some(field), k, y, x)
        }
    };

    let mut out = Vec::with_capacity(729);
    for k in 0..9 {
        let (gky, gkx) = stencil(k);
        let (o3y, o3x) = read(f3, k, py as f64, px as f64);
        // Full-resolution location the last deformable conv reads.
        let q3y = py as f64 + gky + o3y;
        let q3x = px as f64 + gkx + o3x;
        // The same point in quarter-resolution coordinates.
        let b2y = q3y / 4.0;
        let b2x = q3x / 4.0;
        for j in 0..9 {
            let (gjy, gjx) = stencil(j);
            let (o2y, o2x) = read(f2, j, b2y, b2x);
            let q2y = b2y + gjy + o2y;
            let q2x = b2x + gjx + o2x;
            let b1y = q2y / 2.0;
            let b1x = q2x / 2.0;
            for i in 0..9 {
                let (giy, gix) = stencil(i);
                let (o1y, o1x) = read(f1, i, b1y, b1x);
                let q1y = b1y + giy + o1y;
                let q1x = b1x + gix + o1x;
                out.push(AncestralTap { i, j, k, y: 8.0 * q1y, x: 8.0 * q1x });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelParams;
    use crate::model::{FapdVariant, ModelConfig};
    use crate::rng::randn_seeded;
    use std::collections::BTreeSet;

    fn setup() -> (ModelConfig, ModelParams<f64>, Tensor<f64>) {
        let cfg = ModelConfig::tiny();
        let params = ModelParams::<f64>::init(&cfg, 5).unwrap();
        let x = randn_seeded(&[1, 3, 16, 16], 0.5, 80).unwrap();
        (cfg, params, x)
    }

    /// Independent enumeration of the zero-offset composition:
    /// p + G_k + 4*G_j + 8*G_i with each stencil component in {-1, 0, 1}.
    #[test]
    fn zero_offset_ancestry_matches_the_closed_form() {
        let (cfg, params, x) = setup();
        let taps =
            ancestral_sampling_locations(&x, &params.gen, &cfg, (8, 9), true).unwrap();
        assert_eq!(taps.len(), 729);

        let mut expect = Vec::new();
        for k in 0..9usize {
            for j in 0..9usize {
                for i in 0..9usize {
                    let y = 8.0 + (k / 3) as f64 - 1.0
                        + 4.0 * ((j / 3) as f64 - 1.0)
                        + 8.0 * ((i / 3) as f64 - 1.0);
                    let x = 9.0 + (k % 3) as f64 - 1.0
                        + 4.0 * ((j % 3) as f64 - 1.0)
                        + 8.0 * ((i % 3) as f64 - 1.0);
                    expect.push((i, j, k, y, x));
                }
            }
        }
        let got: BTreeSet<String> = taps
            .iter()
            .map(|t| format!("{},{},{},{:.3},{:.3}", t.i, t.j, t.k, t.y, t.x))
            .collect();
        let want: BTreeSet<String> = expect
            .iter()
            .map(|(i, j, k, y, x)| format!("{i},{j},{k},{y:.3},{x:.3}"))
            .collect();
        assert_eq!(got, want);

        // 21 distinct coordinates per axis -> 441 distinct locations.
        let distinct: BTreeSet<String> =
            taps.iter().map(|t| format!("{:.3},{:.3}", t.y, t.x)).collect();
        assert_eq!(distinct.len(), 441);
    }

    #[test]
    fn learned_offsets_bend_the_pattern() {
        let (cfg, params, x) = setup();
        let frozen =
            ancestral_sampling_locations(&x, &params.gen, &cfg, (8, 8), true).unwrap();
        let learned =
            ancestral_sampling_locations(&x, &params.gen, &cfg, (8, 8), false).unwrap();
        let moved = frozen
            .iter()
            .zip(&learned)
            .any(|(a, b)| (a.y - b.y).abs() > 1e-9 || (a.x - b.x).abs() > 1e-9);
        assert!(moved, "random-init offsets should displace at least one tap");
    }

    #[test]
    fn standard_decoder_and_bad_pixel_are_rejected() {
        let (cfg, params, x) = setup();
        assert!(matches!(
            ancestral_sampling_locations(&x, &params.gen, &cfg, (16, 0), true),
            Err(Error::InvalidParam(_))
        ));

        let mut std_cfg = cfg.clone();
        std_cfg.fapd_variant = FapdVariant::Standard;
        let std_params = ModelParams::<f64>::init(&std_cfg, 5).unwrap();
        assert!(matches!(
            ancestral_sampling_locations(&x, &std_params.gen, &std_cfg, (8, 8), true),
            Err(Error::InvalidParam(_))
        ));
    }
}
