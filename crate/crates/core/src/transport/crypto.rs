//! ChaCha20-Poly1305 sealing of frame payloads.
//!
//! The nonce is the device id (8 bytes LE) followed by the 32-bit nonce
//! counter (LE). The associated data is the 22-byte frame header.

use super::frame::FrameHeader;
use super::TransportError;
use chacha20poly1305::aead::AeadInPlace;
use chacha20poly1305::{ChaCha20Poly1305, Key, KeyInit, Nonce, Tag};
use hmac::{Hmac, Mac};
use sha2::Sha256;
use std::collections::HashMap;

pub const TAG_LEN: usize = 16;

#[derive(Clone, PartialEq, Eq)]
pub struct DeviceKey(pub [u8; 32]);

impl std::fmt::Debug for DeviceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("DeviceKey(..)")
    }
}

/// Pre-shared fleet secret from which per-device keys are derived.
#[derive(Clone)]
pub struct FleetKey(pub [u8; 32]);

impl FleetKey {
    /// HMAC-SHA256(fleet, "neoward-device" || device_id LE).
    pub fn device_key(&self, device_id: u64) -> DeviceKey {
        let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&self.0).expect("hmac accepts any key length");
        mac.update(b"neoward-device");
        mac.update(&device_id.to_le_bytes());
        DeviceKey(mac.finalize().into_bytes().into())
    }
}

pub trait KeyProvider: Send + Sync {
    fn device_key(&self, device_id: u64) -> Option<DeviceKey>;
}

impl KeyProvider for FleetKey {
    fn device_key(&self, device_id: u64) -> Option<DeviceKey> {
        Some(FleetKey::device_key(self, device_id))
    }
}

impl KeyProvider for HashMap<u64, DeviceKey> {
    fn device_key(&self, device_id: u64) -> Option<DeviceKey> {
        self.get(&device_id).cloned()
    }
}

pub fn nonce_for(device_id: u64, nonce_ctr: u32) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[..8].copy_from_slice(&device_id.to_le_bytes());
    n[8..].copy_from_slice(&nonce_ctr.to_le_bytes());
    n
}

/// Seals payloads for one device key, refusing any nonce counter that is
/// not strictly greater than the last one used.
#[derive(Debug)]
pub struct Sealer {
    key: DeviceKey,
    device_id: u64,
    last_ctr: Option<u32>,
}

impl Sealer {
    pub fn new(key: DeviceKey, device_id: u64) -> Self {
        Sealer { key, device_id, last_ctr: None }
    }

    pub fn last_counter(&self) -> Option<u32> {
        self.last_ctr
    }

    pub fn seal(&mut self, header: &FrameHeader, plaintext: &[u8]) -> Result<(Vec<u8>, [u8; TAG_LEN]), TransportError> {
        if header.device_id != self.device_id {
            return Err(TransportError::MixedDevices);
        }
        if let Some(last) = self.last_ctr {
            if header.nonce_ctr <= last {
                return Err(TransportError::NonceReuse { counter: header.nonce_ctr, last });
            }
        }
        if header.payload_len as usize != plaintext.len() {
            return Err(TransportError::LengthMismatch { declared: header.payload_len as usize, actual: plaintext.len() });
        }
        let cipher = ChaCha20Poly1305::new(Key::from_slice(&self.key.0));
        let nonce = nonce_for(self.device_id, header.nonce_ctr);
        let mut buf = plaintext.to_vec();
        let tag = cipher
            .encrypt_in_place_detached(Nonce::from_slice(&nonce), &header.to_bytes(), &mut buf)
            .map_err(|_| TransportError::AuthFailed)?;
        self.last_ctr = Some(header.nonce_ctr);
        Ok((buf, tag.into()))
    }
}

pub fn open(key: &DeviceKey, header: &FrameHeader, ciphertext: &[u8], tag: &[u8; TAG_LEN]) -> Result<Vec<u8>, TransportError> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let nonce = nonce_for(header.device_id, header.nonce_ctr);
    let mut buf = ciphertext.to_vec();
    cipher
        .decrypt_in_place_detached(Nonce::from_slice(&nonce), &header.to_bytes(), &mut buf, Tag::from_slice(tag))
        .map_err(|_| TransportError::AuthFailed)?;
    Ok(buf)
}
