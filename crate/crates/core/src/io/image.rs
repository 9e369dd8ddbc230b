//! Byte raster <-> [C,H,W] tensor in [0,1], file IO by format, and
//! reflection padding with an exact inverse crop.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::pngio::{decode_png, encode_png};
use crate::io::pnm::{decode_pnm, encode_pnm};
use crate::io::ImageBuffer;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bytes to [C,H,W] reals, v = byte/255.
pub fn buffer_to_tensor<S: Scalar>(img: &ImageBuffer) -> Tensor<S> {
    let (c, h, w) = (img.channels, img.height, img.width);
    let scale = 1.0 / 255.0;
    Tensor::from_fn(&[c, h, w], |i| {
        let (ch, rest) = (i / (h * w), i % (h * w));
        let (y, x) = (rest / w, rest % w);
        S::of_f64(img.data[(y * w + x) * c + ch] as f64 * scale)
    })
    .expect("dims validated by ImageBuffer")
}

/// [C,H,W] reals to bytes: clamp to [0,1], then byte = floor(v*255 + 0.5).
pub fn tensor_to_buffer<S: Scalar>(t: &Tensor<S>) -> Result<ImageBuffer> {
    let (c, h, w) = t.dims3()?;
    if c != 1 && c != 3 {
        return Err(Error::data(format!("{c}-channel tensor is not an image (need 1 or 3)")));
    }
    let mut data = vec![0u8; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = t.data()[(ch * h + y) * w + x].to_f64_lossy().clamp(0.0, 1.0);
                data[(y * w + x) * c + ch] = (v * 255.0 + 0.5).floor() as u8;
            }
        }
    }
    ImageBuffer::new(w, h, c, data)
}

/// Decode by content: PNG or binary PGM/PPM.
pub fn decode_image(buf: &[u8]) -> Result<ImageBuffer> {
    match buf.get(..2) {
        Some(b"P5") | Some(b"P6") => decode_pnm(buf),
        Some([0x89, b'P']) => decode_png(buf),
        _ => Err(Error::data_at("unrecognized image format (need PNG or binary PGM/PPM)", 0)),
    }
}

/// Load as [C,H,W] in [0,1]. The format is sniffed from the bytes.
pub fn load_image<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let buf = std::fs::read(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let img = decode_image(&buf)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    Ok(buffer_to_tensor(&img))
}

/// Load as [1,H,W]; RGB collapses to the channel mean.
pub fn load_gray<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let t = load_image::<S>(path)?;
    let (c, h, w) = t.dims3()?;
    if c == 1 {
        return Ok(t);
    }
    let third = S::of_f64(1.0 / c as f64);
    Tensor::from_fn(&[1, h, w], |i| {
        (0..c).map(|ch| t.data()[ch * h * w + i]).sum::<S>() * third
    })
}

/// Save a [C,H,W] tensor; the format follows the extension
/// (png / pgm / ppm). PGM wants 1 channel, PPM wants 3.
pub fn save_image<S: Scalar>(t: &Tensor<S>, path: &Path) -> Result<()> {
    let img = tensor_to_buffer(t)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let bytes = match ext.to_ascii_lowercase().as_str() {
        "png" => encode_png(&img)?,
        "pgm" if img.channels == 1 => encode_pnm(&img),
        "ppm" if img.channels == 3 => encode_pnm(&img),
        "pgm" | "ppm" => {
            return Err(Error::data(format!(
                "{}: {} channels do not fit this format",
                path.display(),
                img.channels
            )))
        }
        other => {
            return Err(Error::data(format!(
                "{}: unsupported extension `{other}` (need png, pgm, or ppm)",
                path.display()
            )))
        }
    };
    std::fs::write(path, bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Original dims remembered by `pad_to_multiple`, inverted by `crop_to_record`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRecord {
    pub height: usize,
    pub width: usize,
}

/// Mirror index into 0..len without repeating the edge sample
/// (..., 2, 1, 0, 1, 2, ..., L-1, L-2, ...).
fn mirror(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * len - 2;
    let j = i % period;
    if j < len {
        j
    } else {
        period - j
    }
}

/// Reflect-pad right/bottom so both spatial dims are multiples of `m` and
/// at least `max(grids)`.
pub fn pad_to_multiple<S: Scalar>(
    t: &Tensor<S>,
    m: usize,
    grids: &[usize],
) -> Result<(Tensor<S>, CropRecord)> {
    if m == 0 {
        return Err(Error::InvalidParam("padding multiple must be at least 1".into()));
    }
    let (c, h, w) = t.dims3()?;
    let floor = grids.iter().copied().max().unwrap_or(1);
    let target = |d: usize| d.max(floor).div_ceil(m) * m;
    let (hp, wp) = (target(h), target(w));
    let record = CropRecord { height: h, width: w };
    if (hp, wp) == (h, w) {
        return Ok((t.clone(), record));
    }
    let padded = Tensor::from_fn(&[c, hp, wp], |i| {
        let (ch, rest) = (i / (hp * wp), i % (hp * wp));
        let (y, x) = (mirror(rest / wp, h), mirror(rest % wp, w));
        t.data()[(ch * h + y) * w + x]
    })?;
    Ok((padded, record))
}

/// Keep the top-left `record` region.
pub fn crop_to_record<S: Scalar>(t: &Tensor<S>, record: &CropRecord) -> Result<Tensor<S>> {
    let (c, h, w) = t.dims3()?;
    let (hc, wc) = (record.height, record.width);
    if hc > h || wc > w {
        return Err(Error::ShapeMismatch(format!(
            "crop {hc}x{wc} exceeds padded dims {h}x{w}"
        )));
    }
    Tensor::from_fn(&[c, hc, wc], |i| {
        let (ch, rest) = (i / (hc * wc), i % (hc * wc));
        t.data()[(ch * h + rest / wc) * w + rest % wc]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn reference_quad_scales_to_unit_range() {
        let img = ImageBuffer::new(2, 2, 1, vec![0, 128, 255, 64]).unwrap();
        let t: Tensor<f64> = buffer_to_tensor(&img);
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
    }

    #[test]
    fn quantization_rounds_half_up_and_clamps() {
        let t = Tensor::from_vec(&[1, 1, 3], vec![0.5f64, 1.7, -0.3]).unwrap();
        let img = tensor_to_buffer(&t).unwrap();
        assert_eq!(img.data, vec![128, 255, 0]);
    }

    #[test]
    fn save_load_round_trip_is_quantization_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = CounterRng::new(4);
        let t = Tensor::from_fn(&[3, 9, 7], |_| rng.uniform(0.0, 1.0)).unwrap();
        for name in ["t.png", "t.ppm"] {
            let path = dir.path().join(name);
            save_image(&t, &path).unwrap();
            let back: Tensor<f64> = load_image(&path).unwrap();
            assert_eq!(back.shape(), t.shape());
            let worst = t
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 0.5 / 255.0 + 1e-12, "{name}: {worst}");
        }
    }

    #[test]
    fn gray_loading_averages_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::from_vec(&[3, 1, 1], vec![0.0f64, 0.5, 1.0]).unwrap();
        let path = dir.path().join("c.png");
        save_image(&t, &path).unwrap();
        let g: Tensor<f64> = load_gray(&path).unwrap();
        assert_eq!(g.shape(), &[1, 1, 1]);
        assert!((g.data()[0] - 0.5).abs() < 1e-2);
    }

    #[test]
    fn extension_channel_mismatches_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Tensor::from_vec(&[1, 2, 2], vec![0.1f64; 4]).unwrap();
        let rgb = Tensor::from_vec(&[3, 2, 2], vec![0.1f64; 12]).unwrap();
        assert!(save_image(&gray, &dir.path().join("x.ppm")).is_err());
        assert!(save_image(&rgb, &dir.path().join("x.pgm")).is_err());
        assert!(save_image(&gray, &dir.path().join("x.bmp")).is_err());
        assert!(save_image(&gray, &dir.path().join("x.pgm")).is_ok());
    }

    #[test]
    fn padding_hits_the_next_multiple_and_crop_inverts() {
        let mut rng = CounterRng::new(9);
        let t = Tensor::from_fn(&[2, 61, 61], |_| rng.uniform(0.0, 1.0)).unwrap();
        let (padded, rec) = pad_to_multiple(&t, 8, &[3, 4, 5]).unwrap();
        assert_eq!(padded.shape(), &[2, 64, 64]);
        assert_eq!(rec, CropRecord { height: 61, width: 61 });
        let back = crop_to_record(&padded, &rec).unwrap();
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn aligned_input_passes_through() {
        let t = Tensor::from_vec(&[1, 8, 16], (0..128).map(|i| i as f64).collect()).unwrap();
        let (padded, rec) = pad_to_multiple(&t, 8, &[]).unwrap();
        assert_eq!(padded.data(), t.data());
        assert_eq!((rec.height, rec.width), (8, 16));
    }

    #[test]
    fn padding_respects_the_grid_floor() {
        let t = Tensor::from_vec(&[1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (padded, _) = pad_to_multiple(&t, 2, &[5]).unwrap();
        assert_eq!(padded.shape(), &[1, 6, 6]);
        // Reflection of a 2-wide axis alternates without repeating edges.
        let row: Vec<f64> = padded.data()[..6].to_vec();
        assert_eq!(row, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn mirror_indexing_walks_back_and_forth() {
        let seq: Vec<usize> = (0..8).map(|i| mirror(i, 4)).collect();
        assert_eq!(seq, vec![0, 1, 2, 3, 2, 1, 0, 1]);
        assert!((0..10).all(|i| mirror(i, 1) == 0));
    }
}
