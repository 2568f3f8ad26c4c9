//! Offline-first push synchronization to an aggregation server.

mod delta;
mod engine;
mod netsim;
mod payload;
mod server;

pub use delta::{compute_delta, entity_digest, resolve_conflict, store_digest, Origin, SyncDelta};
pub use engine::{sync_once, AggregationLink, LinkError, SyncConfig, SyncReport};
pub use netsim::{ImpairedLink, Impairment, LocalLink, NetworkCondition, MAX_LATENCY_MS, MAX_LOSS, MIN_LATENCY_MS};
pub use payload::{compress_payload, decompress_payload, DeflateConfig, PushBatch, MAX_BODY};
pub use server::{AggregationServer, PushAck};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("cursor {cursor} is beyond the store head {head}; full resync required")]
    UnknownCursor { cursor: u64, head: u64 },
    #[error("conflicting deltas refer to different entities")]
    KeyMismatch,
    #[error("malformed push: {0}")]
    Malformed(String),
    #[error("checksum mismatch in delta {index}")]
    ChecksumMismatch { index: usize },
    #[error("cursors within a batch must strictly increase")]
    NotFifo,
    #[error("batch starts at cursor {from_cursor} but server is at {server_cursor}")]
    OutOfOrder { from_cursor: u64, server_cursor: u64 },
    #[error("server rejected push ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("sync config: {0}")]
    Config(String),
    #[error("store: {0}")]
    Store(#[from] crate::store::StoreError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl SyncError {
    pub fn http_status(&self) -> u16 {
        match self {
            SyncError::ChecksumMismatch { .. } | SyncError::NotFifo => 422,
            SyncError::OutOfOrder { .. } => 409,
            SyncError::Malformed(_) | SyncError::KeyMismatch => 400,
            _ => 500,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{RecordKey, RecordKind};

    fn delta(cursor: u64, payload: &[u8]) -> SyncDelta {
        SyncDelta {
            key: RecordKey { kind: RecordKind::Vital, device_id: 1, record_id: cursor },
            version: 1,
            t_ms: cursor,
            payload: payload.to_vec(),
            checksum: crc32fast::hash(payload),
            cursor,
            origin: Origin::Gateway,
        }
    }

    fn body(from: u64, deltas: Vec<SyncDelta>) -> Vec<u8> {
        compress_payload(&PushBatch { from_cursor: from, resync: false, deltas }, &DeflateConfig::default()).unwrap()
    }

    #[test]
    fn push_advances_cursor_by_batch_length() {
        let s = AggregationServer::in_memory();
        let ack = s.push(&body(0, (1..=5).map(|c| delta(c, b"v")).collect())).unwrap();
        assert_eq!((ack.cursor, ack.applied), (5, 5));
        assert_eq!(s.cursor(), 5);
    }

    #[test]
    fn corrupted_checksum_rejected_without_partial_apply() {
        let s = AggregationServer::in_memory();
        let mut ds: Vec<_> = (1..=3).map(|c| delta(c, b"v")).collect();
        ds[2].payload = b"tampered".to_vec();
        let err = s.push(&body(0, ds)).unwrap_err();
        assert!(matches!(err, SyncError::ChecksumMismatch { index: 2 }));
        assert_eq!(err.http_status(), 422);
        assert_eq!((s.cursor(), s.entity_count()), (0, 0));
    }

    #[test]
    fn replayed_batch_is_idempotent() {
        let s = AggregationServer::in_memory();
        let b = body(0, (1..=4).map(|c| delta(c, b"v")).collect());
        s.push(&b).unwrap();
        let digest = s.digest();
        let again = s.push(&b).unwrap();
        assert_eq!((again.applied, again.deduped), (0, 4));
        assert_eq!(s.digest(), digest);
        assert_eq!(s.cursor(), 4);
    }

    #[test]
    fn fifo_violations_rejected() {
        let s = AggregationServer::in_memory();
        assert!(matches!(s.push(&body(0, vec![delta(2, b"a"), delta(1, b"b")])), Err(SyncError::NotFifo)));
        assert!(matches!(s.push(&body(7, vec![delta(8, b"a")])), Err(SyncError::OutOfOrder { .. })));
        assert_eq!(s.cursor(), 0);
    }

    #[test]
    fn newer_server_edit_survives_older_push() {
        let s = AggregationServer::in_memory();
        let d = delta(1, b"gw");
        s.server_edit(d.key, 100, b"srv".to_vec()).unwrap();
        s.push(&body(0, vec![d.clone()])).unwrap();
        assert_eq!(s.get(&d.key).unwrap().payload, b"srv");
    }

    #[test]
    fn state_persists_across_restart() {
        let dir = tempfile::tempdir().unwrap();
        let s = AggregationServer::open(dir.path()).unwrap();
        s.push(&body(0, (1..=3).map(|c| delta(c, b"v")).collect())).unwrap();
        let d = s.digest();
        drop(s);
        let s = AggregationServer::open(dir.path()).unwrap();
        assert_eq!((s.cursor(), s.digest()), (3, d));
    }
}
