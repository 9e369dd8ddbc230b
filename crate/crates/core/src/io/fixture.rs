//! Deterministic synthetic photo/sketch pairs: an anti-aliased face
//! (ellipse, two eyes, mouth arc) over a cluttered background, with the
//! paired ground truth being an edge map of the face components only.
//! Everything is a pure function of (seed, index), so regenerated files
//! are byte-identical.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::image::save_image;
use crate::io::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::rng::{mix, CounterRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    color: [f64; 3],
}

/// All geometry in pixel units; the face frame is rotated by `theta`.
#[derive(Debug, Clone)]
pub struct FaceScene {
    size: f64,
    bg0: [f64; 3],
    bg1: [f64; 3],
    bg_angle: f64,
    rects: Vec<Rect>,
    cx: f64,
    cy: f64,
    theta: f64,
    a: f64,
    b: f64,
    skin: [f64; 3],
    eye_dx: f64,
    eye_y: f64,
    eye_a: f64,
    eye_b: f64,
    eye_shade: f64,
    mouth_y: f64,
    mouth_a: f64,
    mouth_b: f64,
    mouth_shade: f64,
}

/// Approximate signed distance (pixels) to an axis-aligned ellipse in
/// local coordinates; negative inside.
fn ellipse_dist(u: f64, v: f64, a: f64, b: f64) -> f64 {
    let e = ((u / a) * (u / a) + (v / b) * (v / b)).sqrt();
    (e - 1.0) * a.min(b)
}

/// 1px-soft fill coverage from a signed distance.
fn fill_alpha(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

/// Anti-aliased stroke of width ~2px centered on the zero level set.
fn stroke_alpha(d: f64) -> f64 {
    (1.3 - d.abs()).clamp(0.0, 1.0)
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

impl FaceScene {
    /// Draw order is fixed; changing it would silently reshuffle every
    /// fixture, so extend only by appending draws.
    pub fn sample(seed: u64, index: u64, size: usize) -> FaceScene {
        let mut rng = CounterRng::new(mix(seed, 0xF1B5_0000 | index));
        let s = size as f64;
        let mut rgb =
            |lo: f64, hi: f64| [rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)];
        let bg0 = rgb(0.2, 0.9);
        let bg1 = rgb(0.2, 0.9);
        let bg_angle = rng.uniform(0.0, std::f64::consts::TAU);
        let rects = (0..2 + rng.below(3))
            .map(|_| {
                let (cx, cy) = (rng.uniform(0.0, s), rng.uniform(0.0, s));
                let (w, h) = (s * rng.uniform(0.08, 0.3), s * rng.uniform(0.08, 0.3));
                Rect {
                    x0: cx - w / 2.0,
                    y0: cy - h / 2.0,
                    x1: cx + w / 2.0,
                    y1: cy + h / 2.0,
                    color: [
                        rng.uniform(0.1, 0.95),
                        rng.uniform(0.1, 0.95),
                        rng.uniform(0.1, 0.95),
                    ],
                }
            })
            .collect();
        let cx = s * (0.5 + rng.uniform(-0.12, 0.12));
        let cy = s * (0.5 + rng.uniform(-0.12, 0.12));
        let theta = rng.uniform(-20.0, 20.0).to_radians();
        let a = s * rng.uniform(0.20, 0.28);
        let b = s * rng.uniform(0.26, 0.34);
        let skin_r = rng.uniform(0.55, 0.8);
        let skin_g = skin_r * rng.uniform(0.75, 0.9);
        let skin_b = skin_g * rng.uniform(0.75, 0.95);
        FaceScene {
            size: s,
            bg0,
            bg1,
            bg_angle,
            rects,
            cx,
            cy,
            theta,
            a,
            b,
            skin: [skin_r, skin_g, skin_b],
            eye_dx: a * rng.uniform(0.35, 0.5),
            eye_y: -b * rng.uniform(0.15, 0.3),
            eye_a: a * rng.uniform(0.12, 0.18),
            eye_b: b * rng.uniform(0.07, 0.12),
            eye_shade: rng.uniform(0.05, 0.2),
            mouth_y: b * rng.uniform(0.35, 0.5),
            mouth_a: a * rng.uniform(0.35, 0.5),
            mouth_b: b * rng.uniform(0.1, 0.18),
            mouth_shade: rng.uniform(0.1, 0.3),
        }
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (sin, cos) = self.theta.sin_cos();
        (dx * cos + dy * sin, -dx * sin + dy * cos)
    }

    fn background(&self, x: f64, y: f64) -> [f64; 3] {
        let (sin, cos) = self.bg_angle.sin_cos();
        let t = ((x * cos + y * sin) / self.size + 1.0) * 0.5;
        let mut c = lerp3(self.bg0, self.bg1, t.clamp(0.0, 1.0));
        for r in &self.rects {
            if x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1 {
                c = r.color;
            }
        }
        c
    }

    /// Pixels the face (plus its stroke margin) cannot touch.
    pub fn is_background(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.local(x, y);
        ellipse_dist(u, v, self.a, self.b) > 3.0
    }

    fn photo_pixel(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.background(x, y);
        let (u, v) = self.local(x, y);
        let face = fill_alpha(ellipse_dist(u, v, self.a, self.b));
        c = lerp3(c, self.skin, face);
        for sx in [-1.0, 1.0] {
            let d = ellipse_dist(u - sx * self.eye_dx, v - self.eye_y, self.eye_a, self.eye_b);
            let shade = [self.eye_shade; 3];
            c = lerp3(c, shade, fill_alpha(d) * face);
        }
        let dm = ellipse_dist(u, v - self.mouth_y, self.mouth_a, self.mouth_b);
        if v >= self.mouth_y {
            c = lerp3(c, [self.mouth_shade; 3], stroke_alpha(dm) * face);
        }
        c
    }

    fn sketch_pixel(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.local(x, y);
        let mut ink = stroke_alpha(ellipse_dist(u, v, self.a, self.b));
        for sx in [-1.0, 1.0] {
            let d = ellipse_dist(u - sx * self.eye_dx, v - self.eye_y, self.eye_a, self.eye_b);
            ink = ink.max(stroke_alpha(d));
        }
        if v >= self.mouth_y {
            let dm = ellipse_dist(u, v - self.mouth_y, self.mouth_a, self.mouth_b);
            ink = ink.max(stroke_alpha(dm));
        }
        ink
    }
}

/// Render the pair for (seed, index): photo [3,size,size], sketch
/// [1,size,size], both in [0,1].
pub fn render_pair(seed: u64, index: u64, size: usize) -> (Tensor<f64>, Tensor<f64>, FaceScene) {
    let scene = FaceScene::sample(seed, index, size);
    let at = |i: usize| {
        let (y, x) = (i / size, i % size);
        (x as f64 + 0.5, y as f64 + 0.5)
    };
    let hw = size * size;
    let photo = Tensor::from_fn(&[3, size, size], |i| {
        let (x, y) = at(i % hw);
        self_clamp(scene.photo_pixel(x, y)[i / hw])
    })
    .expect("static shape");
    let sketch = Tensor::from_fn(&[1, size, size], |i| {
        let (x, y) = at(i);
        self_clamp(scene.sketch_pixel(x, y))
    })
    .expect("static shape");
    (photo, sketch, scene)
}

fn self_clamp(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Generate `count` pairs under `out_dir` plus a manifest (all entries in
/// the train split). Rerunning with the same arguments rewrites identical
/// bytes.
pub fn synth_fixture(out_dir: &Path, seed: u64, count: usize, size: usize) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(Error::InvalidParam("fixture count must be at least 1".into()));
    }
    if size == 0 || size % 8 != 0 {
        return Err(Error::InvalidParam(format!(
            "fixture size {size} must be a positive multiple of 8"
        )));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::data(format!("{}: {e}", out_dir.display())))?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let (photo, sketch, _) = render_pair(seed, i as u64, size);
        let photo_name = format!("photo_{i:03}.png");
        let sketch_name = format!("sketch_{i:03}.png");
        save_image(&photo, &out_dir.join(&photo_name))?;
        save_image(&sketch, &out_dir.join(&sketch_name))?;
        entries.push(ManifestEntry {
            photo: photo_name.into(),
            sketch: sketch_name.into(),
            split: Split::Train,
        });
    }
    let manifest = DatasetManifest { root: out_dir.to_path_buf(), entries };
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
