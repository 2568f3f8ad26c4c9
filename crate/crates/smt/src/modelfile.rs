//! Binary model file.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! 0   8 bytes  magic "NWSMT\0\0\0"
//! 8   u32      format version (1)
//! 12  6 x u32  window, d, heads, freqs, static_dim, semi_dim
//! 36  f64      temperature
//! 44  W x f64  normalizer means, W = 4 + static_dim + semi_dim
//!     W x f64  normalizer stds
//!     u64      parameter count P
//!     P x f64  parameters, tensors in storage order, each row-major
//!     u32      CRC-32 of every preceding byte
//! ```

use crate::dataset::Normalizer;
use crate::model::Model;
use crate::params::{Dims, Params};
use crate::SmtError;
use std::path::Path;

pub const MAGIC: [u8; 8] = *b"NWSMT\0\0\0";
pub const VERSION: u32 = 1;

pub fn to_bytes(m: &Model) -> Vec<u8> {
    let d = m.dims();
    let mut out = Vec::with_capacity(64 + 8 * (m.params.len() + 2 * m.norm.mean.len()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [d.window, d.d, d.heads, d.freqs, d.static_dim, d.semi_dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&m.tau.to_le_bytes());
    for v in m.norm.mean.iter().chain(&m.norm.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(m.params.len() as u64).to_le_bytes());
    for v in &m.params.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], SmtError> {
        let s = self.b.get(self.at..self.at + n).ok_or_else(|| SmtError::Format(format!("truncated at byte {}", self.at)))?;
        self.at += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, SmtError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, SmtError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, SmtError> {
        Ok(self.take(n.checked_mul(8).ok_or_else(|| SmtError::Format("size overflow".into()))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn from_bytes(b: &[u8]) -> Result<Model, SmtError> {
    if b.len() < MAGIC.len() + 8 || b[..8] != MAGIC {
        return Err(SmtError::Format("not a model file".into()));
    }
    let (body, tail) = b.split_at(b.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(SmtError::Format("checksum mismatch".into()));
    }
    let mut c = Cursor { b: body, at: 8 };
    let version = c.u32()?;
    if version != VERSION {
        return Err(SmtError::Format(format!("unsupported version {version}")));
    }
    let mut dim = || c.u32().map(|v| v as usize);
    let dims = Dims { window: dim()?, d: dim()?, heads: dim()?, freqs: dim()?, static_dim: dim()?, semi_dim: dim()? };
    dims.validate()?;
    let tau = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let w = Normalizer::width(&dims);
    let norm = Normalizer { mean: c.f64s(w)?, std: c.f64s(w)? };
    let count = c.u64()? as usize;
    let params = Params::from_data(dims, c.f64s(count)?)?;
    if c.at != body.len() {
        return Err(SmtError::Format(format!("{} trailing bytes", body.len() - c.at)));
    }
    Model::new(params, tau, norm)
}

pub fn save(m: &Model, path: &Path) -> Result<(), SmtError> {
    Ok(std::fs::write(path, to_bytes(m))?)
}

pub fn load(path: &Path) -> Result<Model, SmtError> {
    from_bytes(&std::fs::read(path)?)
}
