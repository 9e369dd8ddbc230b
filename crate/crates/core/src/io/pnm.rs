//! Binary PGM (P5) and PPM (P6), 8-bit only. Decode errors carry the byte
//! offset where parsing stopped.

use crate::error::{Error, Result};
use crate::io::ImageBuffer;

struct Scan<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Scan<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::data_at(msg, self.pos)
    }

    /// Whitespace and `#` comments are interchangeable between header
    /// tokens.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.buf.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.buf.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn uint(&mut self, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.buf.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .expect("digits are ascii")
            .parse()
            .map_err(|_| Error::data_at(format!("{what} out of range"), start))
    }
}

/// Decode a binary PGM/PPM file.
pub fn decode_pnm(buf: &[u8]) -> Result<ImageBuffer> {
    let mut s = Scan { buf, pos: 0 };
    let channels = match buf.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(s.err("not a binary PGM/PPM (expected P5 or P6 magic)")),
    };
    s.pos = 2;
    let width = s.uint("width")?;
    let height = s.uint("height")?;
    let maxval_at = {
        s.skip_separators();
        s.pos
    };
    let maxval = s.uint("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::data_at(
            format!("maxval {maxval} unsupported (need 1..=255)"),
            maxval_at,
        ));
    }
    // Exactly one whitespace byte separates the header from pixel data.
    match s.buf.get(s.pos) {
        Some(b) if b.is_ascii_whitespace() => s.pos += 1,
        _ => return Err(s.err("expected single whitespace before pixel data")),
    }
    let expect = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| s.err("image dimensions overflow"))?;
    let avail = buf.len() - s.pos;
    if avail < expect {
        return Err(Error::data_at(
            format!("pixel data truncated: need {expect} bytes, found {avail}"),
            buf.len(),
        ));
    }
    let mut data = buf[s.pos..s.pos + expect].to_vec();
    if maxval != 255 {
        // Rescale so decoded bytes always mean v/255.
        for b in &mut data {
            *b = ((*b as usize * 255 + maxval / 2) / maxval).min(255) as u8;
        }
    }
    ImageBuffer::new(width, height, channels, data)
}

/// Encode as binary PGM (1 channel) or PPM (3 channels). Byte-deterministic.
pub fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}
