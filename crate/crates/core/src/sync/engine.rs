//! Client side of the sync protocol.

use super::delta::compute_delta;
use super::payload::{compress_payload, DeflateConfig, PushBatch};
use super::server::PushAck;
use super::SyncError;
use crate::clock::Clock;
use crate::store::{RecordKind, Store};
use crate::transport::ConnectionProfile;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinkError {
    #[error("request timed out")]
    Timeout,
    #[error("server rejected push ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("transport: {0}")]
    Transport(String),
}

impl LinkError {
    /// Map a server-side validation error onto the status the HTTP API uses.
    pub fn from_server(e: SyncError) -> Self {
        LinkError::Rejected { status: e.http_status(), message: e.to_string() }
    }

    fn out_of_order(&self) -> bool {
        matches!(self, LinkError::Rejected { status: 409, .. })
    }
}

pub trait AggregationLink {
    fn push(&mut self, body: &[u8]) -> Result<PushAck, LinkError>;
    fn cursor(&mut self) -> Result<u64, LinkError>;
}

impl<L: AggregationLink + ?Sized> AggregationLink for &mut L {
    fn push(&mut self, body: &[u8]) -> Result<PushAck, LinkError> {
        (**self).push(body)
    }

    fn cursor(&mut self) -> Result<u64, LinkError> {
        (**self).cursor()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    pub batch_size: usize,
    /// Retries per batch before the run gives up.
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub deflate: DeflateConfig,
    pub kinds: Vec<RecordKind>,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            batch_size: 500,
            max_retries: 8,
            backoff_base_ms: 100,
            backoff_cap_ms: 30_000,
            deflate: DeflateConfig::default(),
            kinds: RecordKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    /// Deltas in acknowledged batches.
    pub pushed: u64,
    /// Of those, deltas the server already had.
    pub deduped: u64,
    pub retries: u64,
    pub batches: u64,
    pub final_cursor: u64,
    /// Retries ran out; cursor stops at the last acknowledged batch.
    pub exhausted: bool,
    /// Cursors disagreed and the client restarted from the server's view.
    pub resynced: bool,
    pub elapsed_ms: u64,
}

/// Push everything changed since the stored sync cursor, batch by batch,
/// advancing the cursor only on acknowledgment.
pub fn sync_once(
    store: &Store,
    link: &mut dyn AggregationLink,
    config: &SyncConfig,
    clock: &dyn Clock,
) -> Result<SyncReport, SyncError> {
    config.deflate.validate()?;
    if config.batch_size == 0 {
        return Err(SyncError::Config("batch size must be positive".into()));
    }
    let started = clock.now_ms();
    let mut report = SyncReport::default();
    let mut profile = ConnectionProfile::new(0, config.backoff_base_ms, config.backoff_cap_ms, 0.0, 0)
        .map_err(|e| SyncError::Config(e.to_string()))?;
    let mut cursor = store.sync_cursor()?;
    let mut resync = false;
    let mut replans = 0;
    'plan: loop {
        let deltas = match compute_delta(store, cursor, &config.kinds) {
            Ok(d) => d,
            Err(SyncError::UnknownCursor { .. }) => {
                cursor = 0;
                resync = true;
                report.resynced = true;
                compute_delta(store, 0, &config.kinds)?
            }
            Err(e) => return Err(e),
        };
        for chunk in deltas.chunks(config.batch_size) {
            let batch = PushBatch { from_cursor: cursor, resync, deltas: chunk.to_vec() };
            let body = compress_payload(&batch, &config.deflate)?;
            let last = chunk.last().expect("chunks are non-empty").cursor;
            let mut attempt = 0;
            let ack = loop {
                match link.push(&body) {
                    Ok(ack) => break ack,
                    Err(e) if e.out_of_order() && replans < 3 => {
                        // The server lost acknowledged batches; restart from its cursor.
                        replans += 1;
                        report.resynced = true;
                        cursor = match link.cursor() {
                            Ok(c) => c.min(cursor),
                            Err(_) => 0,
                        };
                        store.set_sync_cursor(cursor)?;
                        continue 'plan;
                    }
                    Err(LinkError::Rejected { status, message }) if status != 503 => {
                        return Err(SyncError::Rejected { status, message });
                    }
                    Err(_) if attempt >= config.max_retries => {
                        report.exhausted = true;
                        report.final_cursor = cursor;
                        report.elapsed_ms = clock.now_ms() - started;
                        return Ok(report);
                    }
                    Err(_) => {
                        clock.sleep_ms(profile.next_backoff_ms(attempt));
                        attempt += 1;
                        report.retries += 1;
                    }
                }
            };
            report.pushed += chunk.len() as u64;
            report.deduped += ack.deduped;
            report.batches += 1;
            cursor = last;
            resync = false;
            store.set_sync_cursor(cursor)?;
        }
        break;
    }
    report.final_cursor = cursor;
    report.elapsed_ms = clock.now_ms() - started;
    Ok(report)
}
