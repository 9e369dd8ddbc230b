//! Checkpoint serialization.
//!
//! Layout (all integers little-endian):
//!   magic "PANETCKP" | version u32 | config digest u64 | entry count u32
//!   then per entry:
//!   path len u16 | path bytes | ndim u8 | dims u32 each | values f32 each
//!
//! Entries are (registry path, tensor) pairs in writer order. Values are
//! stored as f32; an f32 model round-trips bit-exactly. The digest is the
//! writing config's `ModelConfig::digest`, so a reader can refuse files from
//! an incompatible topology before touching any shapes.

use crate::error::{Error, Result};
use crate::model::params::ModelParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

pub const MAGIC: [u8; 8] = *b"PANETCKP";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(
    mut w: W,
    digest: u64,
    entries: &[(String, &Tensor<f32>)],
) -> Result<()> {
    if entries.len() > u32::MAX as usize {
        return Err(Error::CheckpointError("too many entries".into()));
    }
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&digest.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (path, tensor) in entries {
        let bytes = path.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::CheckpointError(format!("path too long: {path}")));
        }
        if tensor.shape().len() > u8::MAX as usize {
            return Err(Error::CheckpointError(format!("too many dims in {path}")));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[tensor.shape().len() as u8])?;
        for &d in tensor.shape() {
            if d > u32::MAX as usize {
                return Err(Error::CheckpointError(format!("dim too large in {path}")));
            }
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(
    path: &Path,
    digest: u64,
    entries: &[(String, &Tensor<f32>)],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, digest, entries)?;
    w.flush()?;
    Ok(())
}

/// Byte-slice cursor that reports the failure offset in every error.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CheckpointError(format!(
                "truncated while reading {what} at byte {} (need {n}, have {})",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn parse_checkpoint(buf: &[u8]) -> Result<(u64, Vec<(String, Tensor<f32>)>)> {
    let mut c = Cursor { buf, pos: 0 };
    let magic = c.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(Error::CheckpointError("not a checkpoint file (bad magic)".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::CheckpointError(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let digest = c.u64("config digest")?;
    let count = c.u32("entry count")? as usize;
    let mut entries = Vec::new();
    let mut seen: std::collections::HashSet<String> = std::collections::HashSet::new();
    for i in 0..count {
        let plen = c.u16("path length")? as usize;
        let at = c.pos;
        let path = std::str::from_utf8(c.take(plen, "path")?)
            .map_err(|_| {
                Error::CheckpointError(format!("entry {i}: path is not UTF-8 at byte {at}"))
            })?
            .to_string();
        if !seen.insert(path.clone()) {
            return Err(Error::CheckpointError(format!("duplicate entry {path}")));
        }
        let ndim = c.take(1, "ndim")?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u32("dimension")? as usize);
        }
        let bytes = shape
            .iter()
            .try_fold(4usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::CheckpointError(format!("entry {path}: shape overflow")))?;
        let raw = c.take(bytes, "values")?;
        let len = bytes / 4;
        let mut data = Vec::with_capacity(len);
        for chunk in raw.chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|e| Error::CheckpointError(format!("entry {path}: {e}")))?;
        entries.push((path, tensor));
    }
    if c.pos != buf.len() {
        return Err(Error::CheckpointError(format!(
            "{} trailing bytes after the last entry (byte {})",
            buf.len() - c.pos,
            c.pos
        )));
    }
    Ok((digest, entries))
}

pub fn load_checkpoint(path: &Path) -> Result<(u64, Vec<(String, Tensor<f32>)>)> {
    let buf = std::fs::read(path)?;
    parse_checkpoint(&buf)
}

/// Copy checkpoint entries into a parameter set by registry path. Every
/// parameter must be present with a matching shape; entries under other
/// namespaces (optimizer state, counters) are ignored here.
pub fn fill_params_from_entries<S: Scalar>(
    params: &mut ModelParams<S>,
    entries: &[(String, Tensor<f32>)],
) -> Result<()> {
    let by_path: HashMap<&str, &Tensor<f32>> =
        entries.iter().map(|(p, t)| (p.as_str(), t)).collect();
    for (path, tensor) in params.visit_mut() {
        let src = by_path.get(path.as_str()).ok_or_else(|| {
            Error::CheckpointError(format!("checkpoint has no entry for {path}"))
        })?;
        if src.shape() != tensor.shape() {
            return Err(Error::CheckpointError(format!(
                "{path}: checkpoint shape {:?} does not match model shape {:?}",
                src.shape(),
                tensor.shape()
            )));
        }
        for (d, s) in tensor.data_mut().iter_mut().zip(src.data()) {
            *d = S::of_f64(*s as f64);
        }
    }
    Ok(())
}
