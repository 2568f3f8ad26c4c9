//! Columnar delta encoding of vital batches.
//!
//! Layout of an encoded batch:
//!
//! ```text
//! uvarint  base_t_ms
//! uvarint  count
//! column t    : zigzag(t[0]-base), zigzag(t[i]-t[i-1]) ...
//! column hr   : zigzag(hr[0]),     zigzag(hr[i]-hr[i-1]) ...
//! column spo2, rr, temp : same as hr
//! count bytes : motion
//! count bytes : flags
//! ```
//!
//! The device id travels in the frame header, not in the batch.

use super::varint::{put_ivarint, put_uvarint, Reader};
use super::TransportError;
use crate::vitals::{SampleFlags, VitalKind, VitalSample};

/// Uncompressed reference size per sample: 8-byte timestamp plus four 4-byte values.
pub const BASELINE_BYTES_PER_SAMPLE: usize = 24;

pub fn encode_batch(samples: &[VitalSample]) -> Result<Vec<u8>, TransportError> {
    let first = samples.first().ok_or(TransportError::EmptyBatch)?;
    for (i, w) in samples.windows(2).enumerate() {
        if w[1].device_id != first.device_id {
            return Err(TransportError::MixedDevices);
        }
        if w[1].t_ms <= w[0].t_ms {
            return Err(TransportError::UnorderedTimestamps { index: i + 1 });
        }
    }
    let base = first.t_ms;
    let mut out = Vec::with_capacity(16 + samples.len() * 12);
    put_uvarint(&mut out, base);
    put_uvarint(&mut out, samples.len() as u64);

    let mut prev = base as i128;
    for s in samples {
        put_ivarint(&mut out, (s.t_ms as i128 - prev) as i64);
        prev = s.t_ms as i128;
    }
    for kind in VitalKind::ALL {
        let mut prev = 0i64;
        for s in samples {
            let v = s.get(kind) as i64;
            put_ivarint(&mut out, v - prev);
            prev = v;
        }
    }
    out.extend(samples.iter().map(|s| s.motion));
    out.extend(samples.iter().map(|s| s.flags.0));
    Ok(out)
}

pub fn decode_batch(bytes: &[u8], device_id: u64) -> Result<Vec<VitalSample>, TransportError> {
    let bad = |what: &str| TransportError::Decode(what.to_string());
    let mut r = Reader::new(bytes);
    let base = r.uvarint().ok_or_else(|| bad("base timestamp"))?;
    let count = r.uvarint().ok_or_else(|| bad("count"))? as usize;
    // every sample costs at least 7 bytes (five 1-byte varints + motion + flags)
    if count == 0 || count > r.remaining() / 7 {
        return Err(bad("implausible sample count"));
    }
    let mut samples = vec![
        VitalSample {
            device_id,
            t_ms: 0,
            hr: 0,
            spo2: 0,
            rr: 0,
            temp: 0,
            motion: 0,
            flags: SampleFlags::default(),
        };
        count
    ];

    let mut t = base as i128;
    for (i, s) in samples.iter_mut().enumerate() {
        let d = r.ivarint().ok_or_else(|| bad("time column"))? as i128;
        if (i == 0 && d != 0) || (i > 0 && d <= 0) {
            return Err(bad("timestamps not strictly increasing"));
        }
        t += d;
        s.t_ms = u64::try_from(t).map_err(|_| bad("timestamp overflow"))?;
    }
    for kind in VitalKind::ALL {
        let mut v = 0i64;
        for s in samples.iter_mut() {
            let d = r.ivarint().ok_or_else(|| bad("value column"))?;
            v = v.checked_add(d).ok_or_else(|| bad("value overflow"))?;
            s.set(kind, u16::try_from(v).map_err(|_| bad("value out of range"))?);
        }
    }
    let motion = r.bytes(count).ok_or_else(|| bad("motion column"))?;
    let flags = r.bytes(count).ok_or_else(|| bad("flags column"))?;
    for (i, s) in samples.iter_mut().enumerate() {
        s.motion = motion[i];
        s.flags = SampleFlags(flags[i]);
    }
    if r.remaining() != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(samples)
}

/// Static and semi-static feature vectors carried by `StaticFeatures` frames:
/// `u8 n_static, u8 n_semistatic`, then the values as little-endian f64.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePayload {
    pub static_features: Vec<f64>,
    pub semistatic_features: Vec<f64>,
}

impl FeaturePayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.static_features.len() as u8, self.semistatic_features.len() as u8];
        for v in self.static_features.iter().chain(&self.semistatic_features) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TransportError> {
        let bad = || TransportError::Decode("feature payload".into());
        let (&ns, rest) = bytes.split_first().ok_or_else(bad)?;
        let (&nss, rest) = rest.split_first().ok_or_else(bad)?;
        let (ns, nss) = (ns as usize, nss as usize);
        if rest.len() != (ns + nss) * 8 {
            return Err(bad());
        }
        let vals: Vec<f64> = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad());
        }
        Ok(FeaturePayload { static_features: vals[..ns].to_vec(), semistatic_features: vals[ns..].to_vec() })
    }
}
