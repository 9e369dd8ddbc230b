//! PNG decode/encode limited to 8-bit grayscale and RGB, no interlacing.

use crate::error::{Error, Result};
use crate::io::ImageBuffer;

fn decode_err(e: png::DecodingError) -> Error {
    Error::data(format!("png: {e}"))
}

pub fn decode_png(buf: &[u8]) -> Result<ImageBuffer> {
    let decoder = png::Decoder::new(std::io::Cursor::new(buf));
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let info = reader.info();
    if info.interlaced {
        return Err(Error::data("png: interlaced images unsupported"));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::data(format!(
            "png: bit depth {:?} unsupported (need 8)",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::data(format!(
                "png: color type {other:?} unsupported (need grayscale or rgb)"
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::data("png: image too large to buffer"))?;
    let mut data = vec![0u8; size];
    let frame = reader.next_frame(&mut data).map_err(decode_err)?;
    data.truncate(frame.buffer_size());
    ImageBuffer::new(frame.width as usize, frame.height as usize, channels, data)
}

/// Deterministic bytes: fixed encoder settings, no ancillary chunks.
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
    enc.set_color(if img.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::data(format!("png: {e}")))?;
    writer
        .write_image_data(&img.data)
        .map_err(|e| Error::data(format!("png: {e}")))?;
    writer.finish().map_err(|e| Error::data(format!("png: {e}")))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_round_trip() {
        let img = ImageBuffer::new(5, 3, 1, (0..15).map(|i| i * 17).collect()).unwrap();
        let bytes = encode_png(&img).unwrap();
        assert_eq!(decode_png(&bytes).unwrap(), img);
    }

    #[test]
    fn rgb_round_trip() {
        let img = ImageBuffer::new(4, 2, 3, (0..24).map(|i| 255 - i).collect()).unwrap();
        assert_eq!(decode_png(&encode_png(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn encoding_is_deterministic() {
        let img = ImageBuffer::new(8, 8, 1, (0..64).map(|i| (i * 3) as u8).collect()).unwrap();
        assert_eq!(encode_png(&img).unwrap(), encode_png(&img).unwrap());
    }

    #[test]
    fn corrupt_bytes_are_a_data_error() {
        let mut bytes = encode_png(&ImageBuffer::new(4, 4, 1, vec![7; 16]).unwrap()).unwrap();
        bytes.truncate(bytes.len() / 2);
        assert!(matches!(decode_png(&bytes), Err(Error::DataError { .. })));
        assert!(matches!(decode_png(b"not a png"), Err(Error::DataError { .. })));
    }
}
