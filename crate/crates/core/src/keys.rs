//! 256-bit key material loaded from files.
//!
//! A key file holds either 32 raw bytes or 64 hex characters (surrounding
//! whitespace ignored).

use rand::RngCore;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("reading key file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("key file {0} must contain 32 raw bytes or 64 hex characters")]
    Format(String),
}

pub fn parse_key(bytes: &[u8]) -> Option<[u8; 32]> {
    if let Ok(raw) = <[u8; 32]>::try_from(bytes) {
        if !bytes.iter().all(|b| b.is_ascii_hexdigit()) {
            return Some(raw);
        }
    }
    let text = std::str::from_utf8(bytes).ok()?.trim();
    let decoded = hex::decode(text).ok()?;
    decoded.try_into().ok()
}

pub fn load_key(path: &Path) -> Result<[u8; 32], KeyError> {
    let bytes = std::fs::read(path).map_err(|source| KeyError::Io { path: path.display().to_string(), source })?;
    parse_key(&bytes).ok_or_else(|| KeyError::Format(path.display().to_string()))
}

pub fn random_key() -> [u8; 32] {
    let mut k = [0u8; 32];
    rand::rng().fill_bytes(&mut k);
    k
}

/// Write a fresh random key as hex.
pub fn write_new_key(path: &Path) -> Result<[u8; 32], KeyError> {
    let k = random_key();
    std::fs::write(path, hex::encode(k) + "\n").map_err(|source| KeyError::Io { path: path.display().to_string(), source })?;
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_and_raw_forms() {
        let k = [7u8; 32];
        assert_eq!(parse_key(&k), Some(k));
        assert_eq!(parse_key(format!("{}\n", hex::encode(k)).as_bytes()), Some(k));
        assert_eq!(parse_key(b"abc"), None);
    }
}
