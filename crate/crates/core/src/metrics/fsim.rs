//! Feature similarity from phase congruency and gradient magnitude.
//!
//! Phase congruency comes from a 4-scale, 4-orientation log-Gabor bank
//! with the standard published constants (min wavelength 6, scale factor
//! 2, sigmaOnf 0.55, angular spread sigma pi/4/1.2, noise multiplier
//! k = 2), gradients from 3x3 Scharr kernels. Similarity maps are fused
//! as S_pc * S_g and pooled with max(PC_a, PC_b) weights.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::metrics::same_gray_dims;
use crate::tensor::Tensor;

pub const FSIM_MIN_SIDE: usize = 32;

const NSCALE: usize = 4;
const NORIENT: usize = 4;
const MIN_WAVELENGTH: f64 = 6.0;
const MULT: f64 = 2.0;
const SIGMA_ONF: f64 = 0.55;
const D_THETA_ON_SIGMA: f64 = 1.2;
/// Noise energy threshold: mean + K * sigma of the estimated noise
/// response distribution.
const NOISE_K: f64 = 2.0;
const EPSILON: f64 = 1e-4;
/// Butterworth prefilter keeping the bank below Nyquist: cutoff 0.45,
/// order 15.
const LOWPASS_CUTOFF: f64 = 0.45;
const LOWPASS_ORDER: i32 = 15;

/// Stabilizer for the PC similarity term.
pub const T1: f64 = 0.85;
/// Gradient stabilizer, published for a [0,255] range; inputs here are
/// [0,1] so it scales by 255^2.
pub const T2: f64 = 160.0 / (255.0 * 255.0);

/// In-place 2D FFT in row-major order; the inverse is normalized.
fn fft2(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft =
        if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for row in data.chunks_mut(w) {
        row_fft.process(row);
    }
    let col_fft =
        if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut col = vec![Complex64::default(); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
    if inverse {
        let scale = 1.0 / (h * w) as f64;
        for v in data {
            *v *= scale;
        }
    }
}

/// Normalized frequency of FFT bin i along an axis of length n, in
/// (-0.5, 0.5].
fn freq(i: usize, n: usize) -> f64 {
    let s = if i <= n / 2 { i as isize } else { i as isize - n as isize };
    s as f64 / n as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN amplitudes"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Phase congruency map in [0,1), accumulated over orientations as
/// sum(energy) / sum(amplitude).
fn phase_congruency(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let n = h * w;
    let mut spectrum: Vec<Complex64> = img.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut spectrum, h, w, false);

    // Radial log-Gabor components, shared across orientations.
    let mut radius = vec![0.0; n];
    let mut angle = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (freq(y, h), freq(x, w));
            radius[y * w + x] = (fx * fx + fy * fy).sqrt();
            angle[y * w + x] = (-fy).atan2(fx);
        }
    }
    radius[0] = 1.0; // silence log(0) at DC; the filter is zeroed there anyway
    let log_sigma = SIGMA_ONF.ln();
    let radial: Vec<Vec<f64>> = (0..NSCALE)
        .map(|s| {
            let f0 = 1.0 / (MIN_WAVELENGTH * MULT.powi(s as i32));
            let mut filt: Vec<f64> = radius
                .iter()
                .map(|&r| {
                    let lg = (-(r / f0).ln().powi(2) / (2.0 * log_sigma * log_sigma)).exp();
                    lg / (1.0 + (r / LOWPASS_CUTOFF).powi(2 * LOWPASS_ORDER))
                })
                .collect();
            filt[0] = 0.0;
            filt
        })
        .collect();

    let theta_sigma = std::f64::consts::PI / NORIENT as f64 / D_THETA_ON_SIGMA;
    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];

    for o in 0..NORIENT {
        let phi = o as f64 * std::f64::consts::PI / NORIENT as f64;
        let (sin_phi, cos_phi) = phi.sin_cos();
        let spread: Vec<f64> = angle
            .iter()
            .map(|&th| {
                let ds = th.sin() * cos_phi - th.cos() * sin_phi;
                let dc = th.cos() * cos_phi + th.sin() * sin_phi;
                let dtheta = ds.atan2(dc).abs();
                (-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut responses: Vec<Vec<Complex64>> = Vec::with_capacity(NSCALE);
        for filt in &radial {
            let mut band: Vec<Complex64> = (0..n)
                .map(|i| spectrum[i] * (filt[i] * spread[i]))
                .collect();
            fft2(&mut band, h, w, true);
            responses.push(band);
        }

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        for band in &responses {
            for i in 0..n {
                sum_e[i] += band[i].re;
                sum_o[i] += band[i].im;
                sum_an[i] += band[i].norm();
            }
        }

        // Rayleigh-model noise threshold from the smallest-scale response.
        let tau = median(responses[0].iter().map(|c| c.norm()).collect()) / (4.0f64.ln()).sqrt();
        let total_tau = tau * (1.0 - (1.0 / MULT).powi(NSCALE as i32)) / (1.0 - 1.0 / MULT);
        let noise_mean = total_tau * (std::f64::consts::PI / 2.0).sqrt();
        let noise_sigma = total_tau * ((4.0 - std::f64::consts::PI) / 2.0).sqrt();
        // The 1.7 rescale matches the energy measure used here, which
        // under-counts raw noise energy relative to the Rayleigh model.
        let threshold = (noise_mean + NOISE_K * noise_sigma) / 1.7;

        for i in 0..n {
            let x_energy = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + EPSILON;
            let (mean_e, mean_o) = (sum_e[i] / x_energy, sum_o[i] / x_energy);
            let mut energy = 0.0;
            for band in &responses {
                let (e, od) = (band[i].re, band[i].im);
                energy += e * mean_e + od * mean_o - (e * mean_o - od * mean_e).abs();
            }
            energy_all[i] += (energy - threshold).max(0.0);
            an_all[i] += sum_an[i];
        }
    }

    (0..n).map(|i| energy_all[i] / (an_all[i] + EPSILON)).collect()
}

/// Gradient magnitude via Scharr 3x3 kernels (/16 normalization),
/// zero-padded borders.
fn gradient_magnitude(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            img[y as usize * w + x as usize]
        }
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for (dy, row) in [[3.0, 10.0, 3.0], [0.0, 0.0, 0.0], [-3.0, -10.0, -3.0]]
                .iter()
                .enumerate()
            {
                for (dx, &v) in row.iter().enumerate() {
                    let p = at(y + dy as isize - 1, x + dx as isize - 1);
                    gy += v * p;
                    // gx is the transpose pattern
                    let pt = at(y + dx as isize - 1, x + dy as isize - 1);
                    gx += v * pt;
                }
            }
            out[y as usize * w + x as usize] =
                ((gx / 16.0).powi(2) + (gy / 16.0).powi(2)).sqrt();
        }
    }
    out
}

/// Feature similarity in [0,1]; 1.0 on identical images. When both images
/// have no phase structure at all (constant), the score is 1 if they are
/// equal and 0 otherwise.
pub fn fsim(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<f64> {
    let (h, w) = same_gray_dims(a, b)?;
    if h < FSIM_MIN_SIDE || w < FSIM_MIN_SIDE {
        return Err(Error::InvalidParam(format!(
            "image {h}x{w} is below the {FSIM_MIN_SIDE}px minimum side"
        )));
    }
    let pc_a = phase_congruency(a.data(), h, w);
    let pc_b = phase_congruency(b.data(), h, w);
    let g_a = gradient_magnitude(a.data(), h, w);
    let g_b = gradient_magnitude(b.data(), h, w);

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..h * w {
        let s_pc = (2.0 * pc_a[i] * pc_b[i] + T1) / (pc_a[i] * pc_a[i] + pc_b[i] * pc_b[i] + T1);
        let s_g = (2.0 * g_a[i] * g_b[i] + T2) / (g_a[i] * g_a[i] + g_b[i] * g_b[i] + T2);
        let weight = pc_a[i].max(pc_b[i]);
        num += s_pc * s_g * weight;
        den += weight;
    }
    if den < 1e-12 {
        // No phase structure anywhere: featureless images.
        let equal = a.data() == b.data();
        return Ok(if equal { 1.0 } else { 0.0 });
    }
    Ok((num / den).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::testutil::{noisy, photo_image, sketch_image};

    #[test]
    fn identity_is_one_within_1e9() {
        let x = photo_image(2, 40);
        assert!((fsim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_in_its_arguments() {
        let x = sketch_image(3, 40);
        let y = noisy(&x, 0.1, 7);
        let (ab, ba) = (fsim(&x, &y).unwrap(), fsim(&y, &x).unwrap());
        assert!((ab - ba).abs() < 1e-9, "{ab} vs {ba}");
    }

    #[test]
    fn degrades_monotonically_with_noise() {
        let x = photo_image(5, 48);
        let mut last = 1.0;
        for sigma in [0.01, 0.05, 0.1, 0.2] {
            let s = fsim(&x, &noisy(&x, sigma, 13)).unwrap();
            assert!(s < last, "sigma {sigma}: {s} !< {last}");
            last = s;
        }
    }

    #[test]
    fn featureless_pairs_use_the_documented_convention() {
        let c = Tensor::from_vec(&[32, 32], vec![0.4; 1024]).unwrap();
        let d = Tensor::from_vec(&[32, 32], vec![0.6; 1024]).unwrap();
        assert_eq!(fsim(&c, &c.clone()).unwrap(), 1.0);
        assert_eq!(fsim(&c, &d).unwrap(), 0.0);
        // Constant vs structured goes through the normal path.
        let x = photo_image(1, 32);
        let s = fsim(&c, &x).unwrap();
        assert!(s > 0.0 && s < 1.0, "{s}");
    }

    #[test]
    fn small_images_are_rejected() {
        let x = Tensor::from_vec(&[31, 40], vec![0.5; 31 * 40]).unwrap();
        assert!(matches!(fsim(&x, &x), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn stays_in_unit_range_on_unrelated_images() {
        let a = photo_image(8, 32);
        let b = sketch_image(9, 32);
        let s = fsim(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&s), "{s}");
        assert!(s < 1.0);
    }

    /// Odd sizes exercise the non-power-of-two FFT path.
    #[test]
    fn handles_odd_dimensions() {
        let x = photo_image(4, 45);
        assert!((fsim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
    }
}
