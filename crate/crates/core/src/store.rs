//! Encrypted append-only record store.
//!
//! One log file per record kind (`vital.log`, `annotation.log`, ...). Each
//! entry is `u32 len | u32 crc32(body) | body` where body is
//!
//! ```text
//! u8 kind | u64 device | u64 record_id | u64 version | u64 t_ms | u64 cursor
//! | u32 crc32(plaintext) | [12] nonce | AES-256-GCM(payload) with tag
//! ```
//!
//! and the first 45 body bytes are the AEAD associated data. The index is
//! rebuilt from the logs on open; a torn final entry is truncated away.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::ops::Bound;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use thiserror::Error;

const BODY_HEADER: usize = 1 + 8 * 5 + 4;
const NONCE_LEN: usize = 12;
const SYNC_STATE: &str = "sync.state";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("record in {file} at offset {offset} failed to decrypt")]
    Decrypt { file: String, offset: u64 },
    #[error("corrupt entry in {file} at offset {offset}")]
    Corrupt { file: String, offset: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    Vital = 0,
    Annotation = 1,
    Session = 2,
    DeviceMeta = 3,
}

impl RecordKind {
    pub const ALL: [RecordKind; 4] = [RecordKind::Vital, RecordKind::Annotation, RecordKind::Session, RecordKind::DeviceMeta];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Vital => "vital",
            RecordKind::Annotation => "annotation",
            RecordKind::Session => "session",
            RecordKind::DeviceMeta => "device-meta",
        }
    }

    fn file_name(self) -> String {
        format!("{}.log", self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub kind: RecordKind,
    pub device_id: u64,
    pub record_id: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredRecord {
    pub key: RecordKey,
    pub version: u64,
    pub t_ms: u64,
    /// Position in the global mutation order.
    pub cursor: u64,
    pub payload: Vec<u8>,
    pub checksum: u32,
}

#[derive(Default)]
struct State {
    records: BTreeMap<RecordKey, StoredRecord>,
    /// cursor -> key, latest mutation per key only
    by_cursor: BTreeMap<u64, RecordKey>,
    next_cursor: u64,
}

impl State {
    fn apply(&mut self, rec: StoredRecord) {
        if let Some(old) = self.records.get(&rec.key) {
            if old.version >= rec.version {
                return;
            }
            self.by_cursor.remove(&old.cursor);
        }
        self.next_cursor = self.next_cursor.max(rec.cursor + 1);
        self.by_cursor.insert(rec.cursor, rec.key);
        self.records.insert(rec.key, rec);
    }
}

pub struct Store {
    dir: Option<PathBuf>,
    cipher: Aes256Gcm,
    state: RwLock<State>,
    files: Mutex<Vec<Option<File>>>,
    mem_cursor: Mutex<u64>,
}

/// A mutation to apply; version and cursor are assigned by the store.
#[derive(Clone, Debug)]
pub struct Put {
    pub key: RecordKey,
    pub t_ms: u64,
    pub payload: Vec<u8>,
}

impl Store {
    pub fn in_memory(key: &[u8; 32]) -> Self {
        Store {
            dir: None,
            cipher: Aes256Gcm::new(key.into()),
            state: RwLock::new(State { next_cursor: 1, ..State::default() }),
            files: Mutex::new(Vec::new()),
            mem_cursor: Mutex::new(0),
        }
    }

    pub fn open(dir: &Path, key: &[u8; 32]) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let cipher = Aes256Gcm::new(key.into());
        let mut state = State { next_cursor: 1, ..State::default() };
        let mut files = Vec::new();
        for kind in RecordKind::ALL {
            let path = dir.join(kind.file_name());
            let mut f = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
            let valid_len = replay(&mut f, &cipher, &kind.file_name(), &mut state)?;
            if valid_len < f.metadata()?.len() {
                f.set_len(valid_len)?;
            }
            f.seek(SeekFrom::End(0))?;
            files.push(Some(f));
        }
        Ok(Store { dir: Some(dir.to_path_buf()), cipher, state: RwLock::new(state), files: Mutex::new(files), mem_cursor: Mutex::new(0) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Append a batch of mutations with one write per log file. Returns the
    /// stored records in order.
    pub fn put_batch(&self, puts: Vec<Put>) -> Result<Vec<StoredRecord>, StoreError> {
        let mut files = self.files.lock().expect("store writer poisoned");
        let mut state = self.state.write().expect("store index poisoned");
        let mut out = Vec::with_capacity(puts.len());
        let mut buffers: Vec<Vec<u8>> = vec![Vec::new(); 4];
        for put in puts {
            let version = state.records.get(&put.key).map(|r| r.version + 1).unwrap_or(1);
            let cursor = state.next_cursor;
            state.next_cursor += 1;
            let rec = StoredRecord {
                key: put.key,
                version,
                t_ms: put.t_ms,
                cursor,
                checksum: crc32fast::hash(&put.payload),
                payload: put.payload,
            };
            if self.dir.is_some() {
                buffers[rec.key.kind as usize].extend(self.seal_entry(&rec));
            }
            state.apply(rec.clone());
            out.push(rec);
        }
        for (i, buf) in buffers.iter().enumerate() {
            if let (false, Some(Some(f))) = (buf.is_empty(), files.get_mut(i)) {
                f.write_all(buf)?;
            }
        }
        Ok(out)
    }

    pub fn put(&self, key: RecordKey, t_ms: u64, payload: Vec<u8>) -> Result<StoredRecord, StoreError> {
        Ok(self.put_batch(vec![Put { key, t_ms, payload }])?.remove(0))
    }

    /// Force log contents to disk.
    pub fn sync_all(&self) -> Result<(), StoreError> {
        for f in self.files.lock().expect("store writer poisoned").iter().flatten() {
            f.sync_data()?;
        }
        Ok(())
    }

    pub fn get(&self, key: &RecordKey) -> Option<StoredRecord> {
        self.state.read().expect("store index poisoned").records.get(key).cloned()
    }

    /// Records of one kind and device with `record_id` in `[from, to]`.
    pub fn range(&self, kind: RecordKind, device_id: u64, from: u64, to: u64) -> Vec<StoredRecord> {
        if from > to {
            return Vec::new();
        }
        let lo = RecordKey { kind, device_id, record_id: from };
        let hi = RecordKey { kind, device_id, record_id: to };
        let st = self.state.read().expect("store index poisoned");
        st.records.range(lo..=hi).map(|(_, r)| r.clone()).collect()
    }

    pub fn records_of(&self, kind: RecordKind) -> Vec<StoredRecord> {
        let lo = RecordKey { kind, device_id: 0, record_id: 0 };
        let st = self.state.read().expect("store index poisoned");
        st.records.range(lo..).take_while(|(k, _)| k.kind == kind).map(|(_, r)| r.clone()).collect()
    }

    pub fn all_records(&self) -> Vec<StoredRecord> {
        self.state.read().expect("store index poisoned").records.values().cloned().collect()
    }

    pub fn count(&self, kind: RecordKind) -> usize {
        let lo = RecordKey { kind, device_id: 0, record_id: 0 };
        let st = self.state.read().expect("store index poisoned");
        st.records.range(lo..).take_while(|(k, _)| k.kind == kind).count()
    }

    pub fn devices(&self, kind: RecordKind) -> Vec<u64> {
        let st = self.state.read().expect("store index poisoned");
        let mut out: Vec<u64> = Vec::new();
        let mut lo = RecordKey { kind, device_id: 0, record_id: 0 };
        while let Some((k, _)) = st.records.range(lo..).next() {
            if k.kind != kind {
                break;
            }
            out.push(k.device_id);
            if k.device_id == u64::MAX {
                break;
            }
            lo = RecordKey { kind, device_id: k.device_id + 1, record_id: 0 };
        }
        out
    }

    /// Highest cursor assigned so far (0 when empty).
    pub fn head_cursor(&self) -> u64 {
        self.state.read().expect("store index poisoned").next_cursor - 1
    }

    /// Latest version of every record whose last mutation is after `cursor`,
    /// in mutation order.
    pub fn changed_since(&self, cursor: u64) -> Vec<StoredRecord> {
        let st = self.state.read().expect("store index poisoned");
        st.by_cursor
            .range((Bound::Excluded(cursor), Bound::Unbounded))
            .map(|(_, k)| st.records[k].clone())
            .collect()
    }

    /// Drop vital records older than `before_ms` from the index.
    pub fn prune_vitals_before(&self, before_ms: u64) -> usize {
        let mut st = self.state.write().expect("store index poisoned");
        let doomed: Vec<RecordKey> =
            st.records.keys().filter(|k| k.kind == RecordKind::Vital && k.record_id < before_ms).copied().collect();
        for k in &doomed {
            if let Some(r) = st.records.remove(k) {
                st.by_cursor.remove(&r.cursor);
            }
        }
        doomed.len()
    }

    pub fn sync_cursor(&self) -> Result<u64, StoreError> {
        let Some(dir) = &self.dir else { return Ok(*self.mem_cursor.lock().expect("cursor poisoned")) };
        match fs::read_to_string(dir.join(SYNC_STATE)) {
            Ok(s) => Ok(s.trim().parse().unwrap_or(0)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(e.into()),
        }
    }

    /// Persist the last acknowledged sync cursor (atomic rename).
    pub fn set_sync_cursor(&self, cursor: u64) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            *self.mem_cursor.lock().expect("cursor poisoned") = cursor;
            return Ok(());
        };
        let tmp = dir.join(format!("{SYNC_STATE}.tmp"));
        fs::write(&tmp, cursor.to_string())?;
        fs::rename(tmp, dir.join(SYNC_STATE))?;
        Ok(())
    }

    fn seal_entry(&self, rec: &StoredRecord) -> Vec<u8> {
        let mut body = Vec::with_capacity(BODY_HEADER + NONCE_LEN + rec.payload.len() + 16);
        body.push(rec.key.kind as u8);
        for v in [rec.key.device_id, rec.key.record_id, rec.version, rec.t_ms, rec.cursor] {
            body.extend_from_slice(&v.to_le_bytes());
        }
        body.extend_from_slice(&rec.checksum.to_le_bytes());
        let mut nonce = [0u8; NONCE_LEN];
        rand::rng().fill_bytes(&mut nonce);
        let ct = self
            .cipher
            .encrypt(Nonce::from_slice(&nonce), Payload { msg: &rec.payload, aad: &body[..BODY_HEADER] })
            .expect("AES-GCM encryption does not fail for in-range lengths");
        body.extend_from_slice(&nonce);
        body.extend_from_slice(&ct);
        let mut entry = Vec::with_capacity(8 + body.len());
        entry.extend_from_slice(&(body.len() as u32).to_le_bytes());
        entry.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        entry.extend_from_slice(&body);
        entry
    }
}

/// Rebuild index entries from one log. Returns the length of the valid prefix.
fn replay(f: &mut File, cipher: &Aes256Gcm, name: &str, state: &mut State) -> Result<u64, StoreError> {
    let mut data = Vec::new();
    f.seek(SeekFrom::Start(0))?;
    f.read_to_end(&mut data)?;
    let mut off = 0usize;
    while off + 8 <= data.len() {
        let len = u32::from_le_bytes(data[off..off + 4].try_into().expect("4 bytes")) as usize;
        let crc = u32::from_le_bytes(data[off + 4..off + 8].try_into().expect("4 bytes"));
        let Some(body) = data.get(off + 8..off + 8 + len) else { break };
        if crc32fast::hash(body) != crc || len < BODY_HEADER + NONCE_LEN + 16 {
            // A bad checksum on the last entry is a torn write; anywhere else it is corruption.
            if off + 8 + len >= data.len() {
                break;
            }
            return Err(StoreError::Corrupt { file: name.into(), offset: off as u64 });
        }
        let rec = open_entry(cipher, body).ok_or(StoreError::Decrypt { file: name.into(), offset: off as u64 })?;
        state.apply(rec);
        off += 8 + len;
    }
    Ok(off as u64)
}

fn open_entry(cipher: &Aes256Gcm, body: &[u8]) -> Option<StoredRecord> {
    let u64_at = |i: usize| u64::from_le_bytes(body[1 + 8 * i..9 + 8 * i].try_into().expect("8 bytes"));
    let kind = RecordKind::from_u8(body[0])?;
    let checksum = u32::from_le_bytes(body[41..45].try_into().expect("4 bytes"));
    let nonce = &body[BODY_HEADER..BODY_HEADER + NONCE_LEN];
    let payload = cipher
        .decrypt(Nonce::from_slice(nonce), Payload { msg: &body[BODY_HEADER + NONCE_LEN..], aad: &body[..BODY_HEADER] })
        .ok()?;
    if crc32fast::hash(&payload) != checksum {
        return None;
    }
    Some(StoredRecord {
        key: RecordKey { kind, device_id: u64_at(0), record_id: u64_at(1) },
        version: u64_at(2),
        t_ms: u64_at(3),
        cursor: u64_at(4),
        payload,
        checksum,
    })
}
