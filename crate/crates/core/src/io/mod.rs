//! Image codecs (PGM/PPM native, PNG via the `png` crate), tensor
//! conversion, reflection padding, dataset manifests, and deterministic
//! synthetic photo/sketch fixtures.

pub mod fixture;
pub mod image;
pub mod manifest;
pub mod pngio;
pub mod pnm;

use crate::error::{Error, Result};

/// Decoded raster: row-major, channel-interleaved bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (rgb).
    pub channels: usize,
    pub data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::data(format!("image dims {width}x{height} must be positive")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::data(format!("{channels} channels unsupported (need 1 or 3)")));
        }
        let expect = width * height * channels;
        if data.len() != expect {
            return Err(Error::data(format!(
                "pixel buffer holds {} bytes, {width}x{height}x{channels} needs {expect}",
                data.len()
            )));
        }
        Ok(ImageBuffer { width, height, channels, data })
    }
}
