//! Frame layout, building and validating parse.
//!
//! ```text
//! offset size field
//!      0    2 magic 0x4E 0x57
//!      2    1 version (1)
//!      3    1 frame type (0 advertise, 1 vitals batch, 2 ack, 3 static features)
//!      4    8 device id, LE
//!     12    4 seq, LE
//!     16    4 nonce counter, LE
//!     20    2 payload length, LE (<= 4096)
//!     22    n ciphertext
//!   22+n   16 Poly1305 tag
//!   38+n    4 CRC-32 (IEEE) over bytes [0, 38+n), LE
//! ```

use super::crypto::{open, KeyProvider, Sealer, TAG_LEN};
use super::{DeviceKey, TransportError};
use std::collections::HashMap;

pub const MAGIC: [u8; 2] = [0x4E, 0x57];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;
pub const CRC_LEN: usize = 4;
pub const MAX_PAYLOAD: usize = 4096;
/// Bytes of a frame that are not ciphertext.
pub const FRAME_OVERHEAD: usize = HEADER_LEN + TAG_LEN + CRC_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Advertise = 0,
    VitalsBatch = 1,
    Ack = 2,
    StaticFeatures = 3,
}

impl TryFrom<u8> for FrameType {
    type Error = TransportError;

    fn try_from(v: u8) -> Result<Self, TransportError> {
        match v {
            0 => Ok(FrameType::Advertise),
            1 => Ok(FrameType::VitalsBatch),
            2 => Ok(FrameType::Ack),
            3 => Ok(FrameType::StaticFeatures),
            other => Err(TransportError::UnknownFrameType(other)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_type: FrameType,
    pub device_id: u64,
    pub seq: u32,
    pub nonce_ctr: u32,
    pub payload_len: u16,
}

impl FrameHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..2].copy_from_slice(&MAGIC);
        h[2] = VERSION;
        h[3] = self.frame_type as u8;
        h[4..12].copy_from_slice(&self.device_id.to_le_bytes());
        h[12..16].copy_from_slice(&self.seq.to_le_bytes());
        h[16..20].copy_from_slice(&self.nonce_ctr.to_le_bytes());
        h[20..22].copy_from_slice(&self.payload_len.to_le_bytes());
        h
    }

    /// Validate magic, version, type and declared length of a header prefix.
    pub fn parse(h: &[u8]) -> Result<Self, TransportError> {
        if h.len() < HEADER_LEN {
            return Err(TransportError::Truncated { len: h.len(), expected: HEADER_LEN });
        }
        if h[0..2] != MAGIC {
            return Err(TransportError::BadMagic([h[0], h[1]]));
        }
        if h[2] != VERSION {
            return Err(TransportError::UnsupportedVersion(h[2]));
        }
        let frame_type = FrameType::try_from(h[3])?;
        let payload_len = u16::from_le_bytes([h[20], h[21]]);
        if payload_len as usize > MAX_PAYLOAD {
            return Err(TransportError::PayloadTooLarge(payload_len as usize));
        }
        Ok(FrameHeader {
            frame_type,
            device_id: u64::from_le_bytes(h[4..12].try_into().expect("8 bytes")),
            seq: u32::from_le_bytes(h[12..16].try_into().expect("4 bytes")),
            nonce_ctr: u32::from_le_bytes(h[16..20].try_into().expect("4 bytes")),
            payload_len,
        })
    }

    pub fn frame_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload_len as usize
    }
}

/// A structurally valid frame whose payload has not been authenticated yet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawFrame {
    pub header: FrameHeader,
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
    pub crc32: u32,
}

impl RawFrame {
    /// Check framing and CRC. Authentication and replay checks happen in
    /// [`DeviceReceiver::accept`].
    pub fn parse(bytes: &[u8]) -> Result<Self, TransportError> {
        if bytes.len() < FRAME_OVERHEAD {
            return Err(TransportError::Truncated { len: bytes.len(), expected: FRAME_OVERHEAD });
        }
        let header = FrameHeader::parse(&bytes[..HEADER_LEN])?;
        let expected = header.frame_len();
        if bytes.len() != expected {
            return Err(TransportError::Truncated { len: bytes.len(), expected });
        }
        let body_end = expected - CRC_LEN;
        let crc32 = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
        let actual = crc32fast::hash(&bytes[..body_end]);
        if actual != crc32 {
            return Err(TransportError::BadCrc { expected: crc32, actual });
        }
        let ct_end = HEADER_LEN + header.payload_len as usize;
        Ok(RawFrame {
            header,
            ciphertext: bytes[HEADER_LEN..ct_end].to_vec(),
            tag: bytes[ct_end..body_end].try_into().expect("16 bytes"),
            crc32,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header.frame_len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&self.crc32.to_le_bytes());
        out
    }

    /// Assemble a frame and compute its CRC.
    pub fn assemble(header: FrameHeader, ciphertext: Vec<u8>, tag: [u8; TAG_LEN]) -> Self {
        let mut f = RawFrame { header, ciphertext, tag, crc32: 0 };
        let bytes = f.to_bytes();
        f.crc32 = crc32fast::hash(&bytes[..bytes.len() - CRC_LEN]);
        f
    }
}

/// An authenticated, decrypted frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub frame_type: FrameType,
    pub device_id: u64,
    pub seq: u32,
    pub nonce_ctr: u32,
    pub payload: Vec<u8>,
}

/// Device-side frame builder: owns the seq and nonce counters.
#[derive(Debug)]
pub struct FrameSender {
    device_id: u64,
    sealer: Sealer,
    next_seq: u32,
    next_ctr: u32,
}

impl FrameSender {
    pub fn new(device_id: u64, key: DeviceKey) -> Self {
        FrameSender { device_id, sealer: Sealer::new(key, device_id), next_seq: 1, next_ctr: 1 }
    }

    pub fn device_id(&self) -> u64 {
        self.device_id
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    pub fn build(&mut self, frame_type: FrameType, plaintext: &[u8]) -> Result<Vec<u8>, TransportError> {
        if plaintext.len() > MAX_PAYLOAD {
            return Err(TransportError::PayloadTooLarge(plaintext.len()));
        }
        let header = FrameHeader {
            frame_type,
            device_id: self.device_id,
            seq: self.next_seq,
            nonce_ctr: self.next_ctr,
            payload_len: plaintext.len() as u16,
        };
        let (ct, tag) = self.sealer.seal(&header, plaintext)?;
        self.next_seq = self.next_seq.checked_add(1).ok_or(TransportError::CounterExhausted)?;
        self.next_ctr = self.next_ctr.checked_add(1).ok_or(TransportError::CounterExhausted)?;
        Ok(RawFrame::assemble(header, ct, tag).to_bytes())
    }
}

/// Gateway-side per-device receive state.
#[derive(Debug)]
pub struct DeviceReceiver {
    device_id: u64,
    key: DeviceKey,
    last_seq: u32,
}

impl DeviceReceiver {
    pub fn new(device_id: u64, key: DeviceKey) -> Self {
        DeviceReceiver { device_id, key, last_seq: 0 }
    }

    /// Continue after a reconnect without reopening the replay window.
    pub fn resume(device_id: u64, key: DeviceKey, last_seq: u32) -> Self {
        DeviceReceiver { device_id, key, last_seq }
    }

    pub fn last_seq(&self) -> u32 {
        self.last_seq
    }

    /// Authenticate, decrypt, and enforce seq monotonicity. State changes
    /// only on success; replayed frames leave the counter untouched.
    pub fn accept(&mut self, raw: &RawFrame) -> Result<Frame, TransportError> {
        if raw.header.device_id != self.device_id {
            return Err(TransportError::MixedDevices);
        }
        let payload = open(&self.key, &raw.header, &raw.ciphertext, &raw.tag)?;
        if raw.header.seq <= self.last_seq {
            return Err(TransportError::Replay { seq: raw.header.seq, last: self.last_seq });
        }
        self.last_seq = raw.header.seq;
        Ok(Frame {
            frame_type: raw.header.frame_type,
            device_id: raw.header.device_id,
            seq: raw.header.seq,
            nonce_ctr: raw.header.nonce_ctr,
            payload,
        })
    }
}

/// Multi-device receiver keyed by device id.
pub struct Receiver<K: KeyProvider> {
    keys: K,
    links: HashMap<u64, DeviceReceiver>,
}

impl<K: KeyProvider> Receiver<K> {
    pub fn new(keys: K) -> Self {
        Receiver { keys, links: HashMap::new() }
    }

    pub fn last_seq(&self, device_id: u64) -> Option<u32> {
        self.links.get(&device_id).map(|l| l.last_seq)
    }

    /// Parse and validate one frame from raw bytes.
    pub fn accept(&mut self, bytes: &[u8]) -> Result<Frame, TransportError> {
        let raw = RawFrame::parse(bytes)?;
        let id = raw.header.device_id;
        if let Some(link) = self.links.get_mut(&id) {
            return link.accept(&raw);
        }
        let key = self.keys.device_key(id).ok_or(TransportError::UnknownDevice(id))?;
        let mut link = DeviceReceiver::new(id, key);
        let frame = link.accept(&raw)?;
        self.links.insert(id, link);
        Ok(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::FleetKey;

    fn sender() -> (FrameSender, Receiver<FleetKey>) {
        let fleet = FleetKey([3; 32]);
        (FrameSender::new(77, fleet.device_key(77)), Receiver::new(fleet))
    }

    #[test]
    fn built_frame_parses_field_by_field() {
        let (mut tx, _) = sender();
        let bytes = tx.build(FrameType::VitalsBatch, b"payload").unwrap();
        assert_eq!(bytes.len(), FRAME_OVERHEAD + 7);
        let raw = RawFrame::parse(&bytes).unwrap();
        assert_eq!(raw.header.device_id, 77);
        assert_eq!(raw.header.seq, 1);
        assert_eq!(raw.header.nonce_ctr, 1);
        assert_eq!(raw.header.payload_len, 7);
        assert_eq!(raw.to_bytes(), bytes);
    }

    #[test]
    fn accepted_frame_yields_plaintext() {
        let (mut tx, mut rx) = sender();
        let bytes = tx.build(FrameType::StaticFeatures, b"abc").unwrap();
        let f = rx.accept(&bytes).unwrap();
        assert_eq!(f.payload, b"abc");
        assert_eq!(f.frame_type, FrameType::StaticFeatures);
        assert_eq!(rx.last_seq(77), Some(1));
    }

    #[test]
    fn truncated_frame_is_framing_error_without_state_change() {
        let (mut tx, mut rx) = sender();
        let bytes = tx.build(FrameType::VitalsBatch, b"abc").unwrap();
        for cut in [0, 5, HEADER_LEN, bytes.len() - 1] {
            assert!(matches!(rx.accept(&bytes[..cut]), Err(TransportError::Truncated { .. })));
        }
        assert_eq!(rx.last_seq(77), None);
        rx.accept(&bytes).unwrap();
    }

    #[test]
    fn replay_is_dropped_and_counter_unchanged() {
        let (mut tx, mut rx) = sender();
        let first = tx.build(FrameType::VitalsBatch, b"1").unwrap();
        let second = tx.build(FrameType::VitalsBatch, b"2").unwrap();
        rx.accept(&first).unwrap();
        rx.accept(&second).unwrap();
        assert!(matches!(rx.accept(&first), Err(TransportError::Replay { seq: 1, last: 2 })));
        assert!(matches!(rx.accept(&second), Err(TransportError::Replay { seq: 2, last: 2 })));
        assert_eq!(rx.last_seq(77), Some(2));
    }

    #[test]
    fn forged_ciphertext_with_fixed_crc_is_auth_error() {
        let (mut tx, mut rx) = sender();
        let bytes = tx.build(FrameType::VitalsBatch, b"abcdef").unwrap();
        let mut raw = RawFrame::parse(&bytes).unwrap();
        raw.ciphertext[0] ^= 1;
        let forged = RawFrame::assemble(raw.header, raw.ciphertext, raw.tag).to_bytes();
        assert!(matches!(rx.accept(&forged), Err(TransportError::AuthFailed)));
        assert_eq!(rx.last_seq(77), None);
    }

    #[test]
    fn unknown_device_rejected() {
        let fleet = FleetKey([3; 32]);
        let mut tx = FrameSender::new(5, fleet.device_key(5));
        let mut rx = Receiver::new(HashMap::<u64, DeviceKey>::new());
        let bytes = tx.build(FrameType::VitalsBatch, b"x").unwrap();
        assert!(matches!(rx.accept(&bytes), Err(TransportError::UnknownDevice(5))));
    }

    #[test]
    fn oversize_payload_refused() {
        let (mut tx, _) = sender();
        assert!(matches!(tx.build(FrameType::VitalsBatch, &[0; MAX_PAYLOAD + 1]), Err(TransportError::PayloadTooLarge(_))));
        tx.build(FrameType::VitalsBatch, &[0; MAX_PAYLOAD]).unwrap();
    }
}
