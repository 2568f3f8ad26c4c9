use super::SyncError;
use crate::store::{RecordKey, RecordKind, Store, StoredRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::cmp::Ordering;

/// Which side last wrote an entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Gateway = 0,
    Server = 1,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncDelta {
    pub key: RecordKey,
    pub version: u64,
    pub t_ms: u64,
    pub payload: Vec<u8>,
    pub checksum: u32,
    pub cursor: u64,
    pub origin: Origin,
}

impl SyncDelta {
    pub fn from_record(r: &StoredRecord) -> Self {
        SyncDelta {
            key: r.key,
            version: r.version,
            t_ms: r.t_ms,
            payload: r.payload.clone(),
            checksum: r.checksum,
            cursor: r.cursor,
            origin: Origin::Gateway,
        }
    }

    pub fn checksum_ok(&self) -> bool {
        crc32fast::hash(&self.payload) == self.checksum
    }
}

/// Records mutated after `last_cursor`, latest version each, in mutation
/// order. A cursor past the store head means the two sides disagree about
/// history and the caller must resync from zero.
pub fn compute_delta(store: &Store, last_cursor: u64, kinds: &[RecordKind]) -> Result<Vec<SyncDelta>, SyncError> {
    let head = store.head_cursor();
    if last_cursor > head {
        return Err(SyncError::UnknownCursor { cursor: last_cursor, head });
    }
    Ok(store
        .changed_since(last_cursor)
        .iter()
        .filter(|r| kinds.contains(&r.key.kind))
        .map(SyncDelta::from_record)
        .collect())
}

/// Timestamp last-writer-wins. Ties go to the server copy; identical
/// timestamps from the same origin fall back to a total order on content so
/// the result does not depend on argument order.
pub fn resolve_conflict<'a>(local: &'a SyncDelta, remote: &'a SyncDelta) -> Result<&'a SyncDelta, SyncError> {
    if local.key != remote.key {
        return Err(SyncError::KeyMismatch);
    }
    let rank = |d: &SyncDelta| (d.t_ms, d.origin == Origin::Server, d.version, d.checksum, d.payload.clone(), d.cursor);
    Ok(match rank(local).cmp(&rank(remote)) {
        Ordering::Greater => local,
        _ => remote,
    })
}

/// SHA-256 over entities sorted by key. Both sides digest the same fields so
/// equality means identical synced state.
pub fn entity_digest<'a>(entities: impl IntoIterator<Item = (&'a RecordKey, u64, u64, &'a [u8])>) -> String {
    let mut sorted: Vec<_> = entities.into_iter().collect();
    sorted.sort_by_key(|e| *e.0);
    let mut h = Sha256::new();
    for (k, version, t_ms, payload) in sorted {
        h.update([k.kind as u8]);
        h.update(k.device_id.to_le_bytes());
        h.update(k.record_id.to_le_bytes());
        h.update(version.to_le_bytes());
        h.update(t_ms.to_le_bytes());
        h.update((payload.len() as u64).to_le_bytes());
        h.update(payload);
    }
    hex::encode(h.finalize())
}

/// Digest of the store restricted to `kinds`.
pub fn store_digest(store: &Store, kinds: &[RecordKind]) -> String {
    let recs: Vec<StoredRecord> = store.all_records().into_iter().filter(|r| kinds.contains(&r.key.kind)).collect();
    entity_digest(recs.iter().map(|r| (&r.key, r.version, r.t_ms, r.payload.as_slice())))
}
