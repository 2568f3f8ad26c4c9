//! Device-to-gateway wire protocol.

mod channel;
mod codec;
mod crypto;
mod frame;
mod link;
pub mod varint;

pub use channel::{memory_channel, read_frame, FrameSink, MemorySink, MemorySource, StreamSink, TcpFrameSink};
pub use codec::{decode_batch, encode_batch, FeaturePayload, BASELINE_BYTES_PER_SAMPLE};
pub use crypto::{nonce_for, open, DeviceKey, FleetKey, KeyProvider, Sealer, TAG_LEN};
pub use frame::{
    DeviceReceiver, Frame, FrameHeader, FrameSender, FrameType, RawFrame, Receiver, CRC_LEN, FRAME_OVERHEAD,
    HEADER_LEN, MAGIC, MAX_PAYLOAD, VERSION,
};
pub use link::{connection_interval_ms, ConnectionProfile, Priority};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("timestamps not strictly increasing at sample {index}")]
    UnorderedTimestamps { index: usize },
    #[error("batch mixes device ids")]
    MixedDevices,
    #[error("malformed batch: {0}")]
    Decode(String),
    #[error("truncated frame: {len} bytes, expected {expected}")]
    Truncated { len: usize, expected: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown frame type {0}")]
    UnknownFrameType(u8),
    #[error("payload of {0} bytes exceeds 4096")]
    PayloadTooLarge(usize),
    #[error("declared payload length {declared} but got {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("crc mismatch (frame says {expected:08x}, computed {actual:08x})")]
    BadCrc { expected: u32, actual: u32 },
    #[error("authentication failed")]
    AuthFailed,
    #[error("stale seq {seq} (last accepted {last})")]
    Replay { seq: u32, last: u32 },
    #[error("no key for device {0:#x}")]
    UnknownDevice(u64),
    #[error("nonce counter {counter} not above last used {last}")]
    NonceReuse { counter: u32, last: u32 },
    #[error("seq or nonce counter exhausted; rekey required")]
    CounterExhausted,
    #[error("connection profile: {0}")]
    Profile(String),
    #[error("link i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by the gateway's reject metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectKind {
    Framing,
    Corruption,
    Authentication,
    Replay,
    Other,
}

impl TransportError {
    pub fn reject_kind(&self) -> RejectKind {
        match self {
            TransportError::Truncated { .. }
            | TransportError::BadMagic(_)
            | TransportError::UnsupportedVersion(_)
            | TransportError::UnknownFrameType(_)
            | TransportError::PayloadTooLarge(_)
            | TransportError::LengthMismatch { .. } => RejectKind::Framing,
            TransportError::BadCrc { .. } => RejectKind::Corruption,
            TransportError::AuthFailed | TransportError::UnknownDevice(_) => RejectKind::Authentication,
            TransportError::Replay { .. } => RejectKind::Replay,
            _ => RejectKind::Other,
        }
    }
}
