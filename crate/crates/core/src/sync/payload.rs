//! Push batch serialization and raw Deflate framing.
//!
//! Compressed body: one prelude byte `(window_bits << 4) | level`, then a raw
//! Deflate stream of the serialized batch:
//!
//! ```text
//! u64 from_cursor | u8 resync | u32 count | count x delta
//! delta = u8 kind | u64 device | u64 record_id | u64 version | u64 t_ms
//!       | u64 cursor | u8 origin | u32 checksum | u32 len | payload
//! ```
//! All integers little-endian.

use super::delta::{Origin, SyncDelta};
use super::SyncError;
use crate::store::{RecordKey, RecordKind};
use flate2::{Compress, Compression, Decompress};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Decompressed bodies larger than this are refused.
pub const MAX_BODY: usize = 64 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeflateConfig {
    pub level: u8,
    /// LZ77 window as log2 bytes, 9..=15 (15 = 32 KiB).
    pub window_bits: u8,
}

impl Default for DeflateConfig {
    fn default() -> Self {
        DeflateConfig { level: 6, window_bits: 15 }
    }
}

impl DeflateConfig {
    pub fn validate(&self) -> Result<(), SyncError> {
        if self.level > 9 || !(9..=15).contains(&self.window_bits) {
            return Err(SyncError::Config("deflate level must be 0-9 and window bits 9-15".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PushBatch {
    /// Cursor the client believes the server has acknowledged.
    pub from_cursor: u64,
    /// Full re-send after the cursors diverged.
    pub resync: bool,
    pub deltas: Vec<SyncDelta>,
}

impl PushBatch {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.deltas.iter().map(|d| 57 + d.payload.len()).sum::<usize>());
        out.extend_from_slice(&self.from_cursor.to_le_bytes());
        out.push(self.resync as u8);
        out.extend_from_slice(&(self.deltas.len() as u32).to_le_bytes());
        for d in &self.deltas {
            out.push(d.key.kind as u8);
            for v in [d.key.device_id, d.key.record_id, d.version, d.t_ms, d.cursor] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(d.origin as u8);
            out.extend_from_slice(&d.checksum.to_le_bytes());
            out.extend_from_slice(&(d.payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&d.payload);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SyncError> {
        let mut r = bytes;
        let bad = |m: &str| SyncError::Malformed(m.to_string());
        fn take<'a>(r: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
            if r.len() < n {
                return None;
            }
            let (a, b) = r.split_at(n);
            *r = b;
            Some(a)
        }
        let u64_ = |r: &mut &[u8]| take(r, 8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")));
        let u32_ = |r: &mut &[u8]| take(r, 4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")));
        let u8_ = |r: &mut &[u8]| take(r, 1).map(|b| b[0]);
        let from_cursor = u64_(&mut r).ok_or_else(|| bad("header"))?;
        let resync = u8_(&mut r).ok_or_else(|| bad("header"))? != 0;
        let count = u32_(&mut r).ok_or_else(|| bad("header"))? as usize;
        let mut deltas = Vec::with_capacity(count.min(r.len() / 57 + 1));
        for _ in 0..count {
            let kind = RecordKind::from_u8(u8_(&mut r).ok_or_else(|| bad("delta"))?).ok_or_else(|| bad("record kind"))?;
            let mut f = [0u64; 5];
            for v in &mut f {
                *v = u64_(&mut r).ok_or_else(|| bad("delta"))?;
            }
            let origin = match u8_(&mut r).ok_or_else(|| bad("delta"))? {
                0 => Origin::Gateway,
                1 => Origin::Server,
                _ => return Err(bad("origin")),
            };
            let checksum = u32_(&mut r).ok_or_else(|| bad("delta"))?;
            let len = u32_(&mut r).ok_or_else(|| bad("delta"))? as usize;
            let payload = take(&mut r, len).ok_or_else(|| bad("payload"))?.to_vec();
            deltas.push(SyncDelta {
                key: RecordKey { kind, device_id: f[0], record_id: f[1] },
                version: f[2],
                t_ms: f[3],
                cursor: f[4],
                origin,
                checksum,
                payload,
            });
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(PushBatch { from_cursor, resync, deltas })
    }
}

pub fn compress_payload(batch: &PushBatch, cfg: &DeflateConfig) -> Result<Vec<u8>, SyncError> {
    cfg.validate()?;
    let compress = Compress::new_with_window_bits(Compression::new(cfg.level as u32), false, cfg.window_bits);
    let mut out = vec![(cfg.window_bits << 4) | cfg.level];
    let mut enc = flate2::write::ZlibEncoder::new_with_compress(&mut out, compress);
    enc.write_all(&batch.encode())?;
    enc.finish()?;
    Ok(out)
}

pub fn decompress_payload(bytes: &[u8]) -> Result<PushBatch, SyncError> {
    let (&prelude, stream) = bytes.split_first().ok_or_else(|| SyncError::Malformed("empty body".into()))?;
    let window_bits = prelude >> 4;
    if !(9..=15).contains(&window_bits) || prelude & 0x0F > 9 {
        return Err(SyncError::Malformed(format!("bad prelude {prelude:#04x}")));
    }
    let dec = flate2::read::ZlibDecoder::new_with_decompress(stream, Decompress::new_with_window_bits(false, window_bits));
    let mut raw = Vec::new();
    dec.take(MAX_BODY as u64 + 1)
        .read_to_end(&mut raw)
        .map_err(|e| SyncError::Malformed(format!("inflate: {e}")))?;
    if raw.len() > MAX_BODY {
        return Err(SyncError::Malformed("body too large".into()));
    }
    PushBatch::decode(&raw)
}
