//! In-process aggregation server. The HTTP wrapper lives in the service crate.

use super::delta::{entity_digest, resolve_conflict, Origin, SyncDelta};
use super::payload::decompress_payload;
use super::SyncError;
use crate::store::RecordKey;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushAck {
    /// Highest cursor the server has applied.
    pub cursor: u64,
    pub applied: u64,
    pub deduped: u64,
}

#[derive(Default, Serialize, Deserialize)]
struct ServerState {
    cursor: u64,
    entities: BTreeMap<String, SyncDelta>,
    batches: u64,
}

fn entity_id(k: &RecordKey) -> String {
    format!("{}:{}:{}", k.kind.as_str(), k.device_id, k.record_id)
}

pub struct AggregationServer {
    state: Mutex<ServerState>,
    dir: Option<PathBuf>,
}

impl Default for AggregationServer {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl AggregationServer {
    pub fn in_memory() -> Self {
        AggregationServer { state: Mutex::new(ServerState::default()), dir: None }
    }

    /// Load or create state under `dir` (`state.json`).
    pub fn open(dir: &Path) -> Result<Self, SyncError> {
        fs::create_dir_all(dir)?;
        let path = dir.join("state.json");
        let state = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| SyncError::Malformed(format!("server state: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => ServerState::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(AggregationServer { state: Mutex::new(state), dir: Some(dir.to_path_buf()) })
    }

    pub fn cursor(&self) -> u64 {
        self.state.lock().expect("server state poisoned").cursor
    }

    pub fn entity_count(&self) -> usize {
        self.state.lock().expect("server state poisoned").entities.len()
    }

    pub fn get(&self, key: &RecordKey) -> Option<SyncDelta> {
        self.state.lock().expect("server state poisoned").entities.get(&entity_id(key)).cloned()
    }

    pub fn digest(&self) -> String {
        let st = self.state.lock().expect("server state poisoned");
        entity_digest(st.entities.values().map(|d| (&d.key, d.version, d.t_ms, d.payload.as_slice())))
    }

    /// Apply a compressed push body. Validation failures leave state untouched.
    pub fn push(&self, body: &[u8]) -> Result<PushAck, SyncError> {
        let batch = decompress_payload(body)?;
        if let Some(i) = batch.deltas.iter().position(|d| !d.checksum_ok()) {
            return Err(SyncError::ChecksumMismatch { index: i });
        }
        if batch.deltas.windows(2).any(|w| w[1].cursor <= w[0].cursor)
            || batch.deltas.first().is_some_and(|d| d.cursor <= batch.from_cursor)
        {
            return Err(SyncError::NotFifo);
        }
        let mut st = self.state.lock().expect("server state poisoned");
        if !batch.resync && batch.from_cursor > st.cursor {
            return Err(SyncError::OutOfOrder { from_cursor: batch.from_cursor, server_cursor: st.cursor });
        }
        let mut ack = PushAck { cursor: st.cursor, applied: 0, deduped: 0 };
        let last = batch.deltas.last().map(|d| d.cursor);
        for d in batch.deltas {
            let id = entity_id(&d.key);
            let already = (!batch.resync && d.cursor <= st.cursor)
                || st.entities.get(&id).is_some_and(|e| e.origin == Origin::Gateway && e.version >= d.version);
            if already {
                ack.deduped += 1;
                continue;
            }
            let winner = match st.entities.get(&id) {
                Some(existing) => resolve_conflict(&d, existing)?.clone(),
                None => d.clone(),
            };
            st.entities.insert(id, winner);
            ack.applied += 1;
        }
        if let Some(last) = last {
            st.cursor = if batch.resync { last } else { st.cursor.max(last) };
        }
        st.batches += 1;
        ack.cursor = st.cursor;
        self.persist(&st)?;
        Ok(ack)
    }

    /// Edit an entity on the server side (for conflict experiments).
    pub fn server_edit(&self, key: RecordKey, t_ms: u64, payload: Vec<u8>) -> Result<(), SyncError> {
        let mut st = self.state.lock().expect("server state poisoned");
        let id = entity_id(&key);
        let version = st.entities.get(&id).map(|e| e.version + 1).unwrap_or(1);
        let d = SyncDelta { key, version, t_ms, checksum: crc32fast::hash(&payload), payload, cursor: 0, origin: Origin::Server };
        st.entities.insert(id, d);
        self.persist(&st)
    }

    fn persist(&self, st: &ServerState) -> Result<(), SyncError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let tmp = dir.join("state.json.tmp");
        fs::write(&tmp, serde_json::to_vec(st).map_err(|e| SyncError::Malformed(e.to_string()))?)?;
        fs::rename(tmp, dir.join("state.json"))?;
        Ok(())
    }
}
