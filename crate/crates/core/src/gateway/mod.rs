//! Ward-side ingestion service core.
//!
//! Each connected device gets a [`DeviceIngest`] handle that authenticates
//! frames and pushes them into that device's SPSC ring. A single drainer
//! calls [`Gateway::drain`] to persist samples, run the alert engine and fan
//! events out to subscribers. Static feature frames wait in a batch queue
//! that [`Gateway::tick`] flushes on a fixed interval.

mod records;

pub use records::{Annotation, DeviceMeta, DeviceSummary, KmcSession, LatencyStats};

use crate::alerts::{Alert, AlertConfig, AlertEngine, AlertError, AlertState, ChangeKind, EngineStats, PatientCategory, ThresholdSet};
use crate::clock::Clock;
use crate::ring::{self, Consumer, Producer, PushOutcome};
use crate::store::{Put, RecordKey, RecordKind, Store, StoreError};
use crate::sync::{sync_once, AggregationLink, SyncConfig, SyncError, SyncReport};
use crate::transport::{
    decode_batch, DeviceReceiver, FeaturePayload, Frame, FrameType, KeyProvider, RawFrame, TransportError,
};
use crate::vitals::VitalSample;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;
use thiserror::Error;
use tokio::sync::broadcast;

const DAY_MS: u64 = 86_400_000;
const LATENCY_WINDOW: usize = 1 << 18;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Alert(#[from] AlertError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct GatewayConfig {
    /// Per-device ring capacity in frames; power of two.
    pub ring_capacity: usize,
    pub static_flush_ms: u64,
    /// Drop vitals older than this many days on each tick. `None` keeps everything.
    pub retain_days: Option<u32>,
    pub alerts: AlertConfig,
    pub thresholds: ThresholdSet,
    pub event_capacity: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            ring_capacity: ring::DEFAULT_CAPACITY,
            static_flush_ms: 60_000,
            retain_days: None,
            alerts: AlertConfig::default(),
            thresholds: ThresholdSet::default(),
            event_capacity: 4_096,
        }
    }
}

/// Messages on the live stream. Serialized with a `type` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GatewayEvent {
    Vitals { device_id: u64, samples: Vec<VitalSample> },
    Alert { change: ChangeKind, alert: Alert },
    Sync { status: SyncStatus },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncStatus {
    pub running: bool,
    pub cursor: u64,
    pub head_cursor: u64,
    pub pending: usize,
    pub last_report: Option<SyncReport>,
    pub last_error: Option<String>,
    pub last_sync_ms: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub frames: u64,
    pub samples: u64,
    pub rejects: u64,
    pub ring_dropped: u64,
    pub connected: usize,
    pub latency: LatencyStats,
    pub alerts: EngineStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DrainStats {
    pub frames: usize,
    pub samples: usize,
}

/// Model-based risk scoring plugged into ingestion. Returns a high-risk
/// probability whenever a fresh prediction is available.
pub trait RiskHook: Send + Sync {
    fn on_sample(&self, sample: &VitalSample) -> Option<f64>;
}

struct Queued {
    frame: Frame,
    received: Instant,
}

struct LinkSlot {
    producer: Option<Producer<Queued>>,
    last_seq: u32,
}

#[derive(Default)]
struct Sessions {
    active: HashMap<u64, u64>,
    next_id: u64,
}

pub struct Gateway {
    config: GatewayConfig,
    store: Arc<Store>,
    keys: Arc<dyn KeyProvider>,
    clock: Arc<dyn Clock>,
    links: Mutex<HashMap<u64, LinkSlot>>,
    consumers: Mutex<BTreeMap<u64, Consumer<Queued>>>,
    alerts: Mutex<AlertEngine>,
    events: broadcast::Sender<GatewayEvent>,
    static_queue: Mutex<Vec<(u64, u64, FeaturePayload)>>,
    last_static_flush: AtomicU64,
    sessions: Mutex<Sessions>,
    next_annotation: AtomicU64,
    frames: AtomicU64,
    samples: AtomicU64,
    rejects: AtomicU64,
    latencies: Mutex<Vec<u64>>,
    sync_running: AtomicBool,
    sync_status: Mutex<SyncStatus>,
    risk: RwLock<Option<Arc<dyn RiskHook>>>,
}

fn decode_json<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Option<T> {
    serde_json::from_slice(bytes).ok()
}

fn json(v: &impl Serialize) -> Vec<u8> {
    serde_json::to_vec(v).expect("record types serialize")
}

impl Gateway {
    pub fn new(
        store: Arc<Store>,
        keys: Arc<dyn KeyProvider>,
        clock: Arc<dyn Clock>,
        config: GatewayConfig,
    ) -> Result<Arc<Self>, GatewayError> {
        if !config.ring_capacity.is_power_of_two() {
            return Err(GatewayError::Invalid(format!("ring capacity {} is not a power of two", config.ring_capacity)));
        }
        let mut engine = AlertEngine::new(config.alerts.clone(), config.thresholds.clone())?;
        for r in store.records_of(RecordKind::DeviceMeta) {
            if let Some(cat) = decode_json::<DeviceMeta>(&r.payload).and_then(|m| m.category) {
                engine.set_category(r.key.device_id, cat);
            }
        }
        let mut sessions = Sessions { next_id: 1, ..Default::default() };
        for r in store.records_of(RecordKind::Session) {
            sessions.next_id = sessions.next_id.max(r.key.record_id + 1);
            if let Some(s) = decode_json::<KmcSession>(&r.payload).filter(KmcSession::active) {
                sessions.active.insert(s.device_id, s.session_id);
            }
        }
        let next_annotation =
            store.records_of(RecordKind::Annotation).iter().map(|r| r.key.record_id + 1).max().unwrap_or(1);
        let (events, _) = broadcast::channel(config.event_capacity.max(1));
        let now = clock.now_ms();
        Ok(Arc::new(Gateway {
            store,
            keys,
            links: Mutex::new(HashMap::new()),
            consumers: Mutex::new(BTreeMap::new()),
            alerts: Mutex::new(engine),
            events,
            static_queue: Mutex::new(Vec::new()),
            last_static_flush: AtomicU64::new(now),
            sessions: Mutex::new(sessions),
            next_annotation: AtomicU64::new(next_annotation),
            frames: AtomicU64::new(0),
            samples: AtomicU64::new(0),
            rejects: AtomicU64::new(0),
            latencies: Mutex::new(Vec::new()),
            sync_running: AtomicBool::new(false),
            sync_status: Mutex::new(SyncStatus::default()),
            risk: RwLock::new(None),
            clock,
            config,
        }))
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn subscribe(&self) -> broadcast::Receiver<GatewayEvent> {
        self.events.subscribe()
    }

    pub fn set_risk_hook(&self, hook: Option<Arc<dyn RiskHook>>) {
        *self.risk.write().expect("risk hook poisoned") = hook;
    }

    fn emit(&self, ev: GatewayEvent) {
        let _ = self.events.send(ev);
    }

    fn reject<T>(&self, e: impl Into<GatewayError>) -> Result<T, GatewayError> {
        self.rejects.fetch_add(1, Ordering::Relaxed);
        Err(e.into())
    }

    /// Attach a device. At most one handle per device exists at a time.
    pub fn connect(self: &Arc<Self>, device_id: u64) -> Result<DeviceIngest, GatewayError> {
        let key = self.keys.device_key(device_id).ok_or(TransportError::UnknownDevice(device_id))?;
        let mut links = self.links.lock().expect("links poisoned");
        let slot = match links.get_mut(&device_id) {
            Some(slot) => slot,
            None => {
                let (p, c) = ring::channel(self.config.ring_capacity)
                    .map_err(|e| GatewayError::Invalid(e.to_string()))?;
                self.consumers.lock().expect("consumers poisoned").insert(device_id, c);
                links.entry(device_id).or_insert(LinkSlot { producer: Some(p), last_seq: 0 })
            }
        };
        let producer = slot
            .producer
            .take()
            .ok_or_else(|| GatewayError::Conflict(format!("device {device_id} is already connected")))?;
        Ok(DeviceIngest {
            device_id,
            rx: DeviceReceiver::resume(device_id, key, slot.last_seq),
            producer: Some(producer),
            gateway: Arc::clone(self),
        })
    }

    /// Handle one authenticated frame synchronously. Returns the number of
    /// samples stored; static features are queued and return 0.
    pub fn ingest(&self, frame: Frame) -> Result<usize, GatewayError> {
        self.ingest_at(frame, Instant::now())
    }

    fn ingest_at(&self, frame: Frame, received: Instant) -> Result<usize, GatewayError> {
        self.frames.fetch_add(1, Ordering::Relaxed);
        match frame.frame_type {
            FrameType::VitalsBatch => {
                let samples = match decode_batch(&frame.payload, frame.device_id) {
                    Ok(s) => s,
                    Err(e) => return self.reject(e),
                };
                self.store_samples(frame.device_id, samples, received)
            }
            FrameType::StaticFeatures => {
                let features = match FeaturePayload::decode(&frame.payload) {
                    Ok(f) => f,
                    Err(e) => return self.reject(e),
                };
                let t = self.clock.now_ms();
                self.static_queue.lock().expect("static queue poisoned").push((frame.device_id, t, features));
                Ok(0)
            }
            FrameType::Advertise | FrameType::Ack => Ok(0),
        }
    }

    fn store_samples(&self, device_id: u64, samples: Vec<VitalSample>, received: Instant) -> Result<usize, GatewayError> {
        let puts = samples
            .iter()
            .map(|s| Put {
                key: RecordKey { kind: RecordKind::Vital, device_id, record_id: s.t_ms },
                t_ms: s.t_ms,
                payload: s.to_bytes().to_vec(),
            })
            .collect();
        self.store.put_batch(puts)?;
        let n = samples.len();
        self.samples.fetch_add(n as u64, Ordering::Relaxed);
        let risk = self.risk.read().expect("risk hook poisoned").clone();
        let mut changes = Vec::new();
        {
            let mut engine = self.alerts.lock().expect("alert engine poisoned");
            for s in &samples {
                changes.extend(engine.observe(s));
                if let Some(p) = risk.as_ref().and_then(|h| h.on_sample(s)) {
                    changes.extend(engine.observe_risk(device_id, s.t_ms, p));
                }
            }
        }
        let elapsed = received.elapsed().as_micros() as u64;
        {
            let mut lat = self.latencies.lock().expect("latencies poisoned");
            if lat.len() >= LATENCY_WINDOW {
                lat.drain(..LATENCY_WINDOW / 2);
            }
            lat.push(elapsed);
        }
        self.emit(GatewayEvent::Vitals { device_id, samples });
        for c in changes {
            self.emit(GatewayEvent::Alert { change: c.kind, alert: c.alert });
        }
        Ok(n)
    }

    /// Empty every device ring into the store. Call at least once a second.
    pub fn drain(&self) -> DrainStats {
        let mut out = DrainStats::default();
        let mut consumers = self.consumers.lock().expect("consumers poisoned");
        for c in consumers.values_mut() {
            while let Some(q) = c.pop() {
                out.frames += 1;
                if let Ok(n) = self.ingest_at(q.frame, q.received) {
                    out.samples += n;
                }
            }
        }
        out
    }

    /// Periodic housekeeping: static batch flush, cluster expiry, retention.
    pub fn tick(&self, now_ms: u64) -> Result<(), GatewayError> {
        let last = self.last_static_flush.load(Ordering::Relaxed);
        if now_ms.saturating_sub(last) >= self.config.static_flush_ms {
            self.flush_static()?;
            self.last_static_flush.store(now_ms, Ordering::Relaxed);
        }
        self.alerts.lock().expect("alert engine poisoned").tick(now_ms);
        if let Some(days) = self.config.retain_days {
            self.store.prune_vitals_before(now_ms.saturating_sub(days as u64 * DAY_MS));
        }
        Ok(())
    }

    /// Write queued static features into device metadata now.
    pub fn flush_static(&self) -> Result<usize, GatewayError> {
        let queued = std::mem::take(&mut *self.static_queue.lock().expect("static queue poisoned"));
        let n = queued.len();
        for (device_id, t, f) in queued {
            let mut meta = self.device_meta(device_id).unwrap_or_default();
            meta.static_features = f.static_features;
            meta.semistatic_features = f.semistatic_features;
            meta.updated_ms = t;
            self.put_meta(device_id, &meta)?;
        }
        Ok(n)
    }

    pub fn pending_static(&self) -> usize {
        self.static_queue.lock().expect("static queue poisoned").len()
    }

    fn meta_key(device_id: u64) -> RecordKey {
        RecordKey { kind: RecordKind::DeviceMeta, device_id, record_id: 0 }
    }

    fn put_meta(&self, device_id: u64, meta: &DeviceMeta) -> Result<(), GatewayError> {
        self.store.put(Self::meta_key(device_id), meta.updated_ms, json(meta))?;
        Ok(())
    }

    pub fn device_meta(&self, device_id: u64) -> Option<DeviceMeta> {
        self.store.get(&Self::meta_key(device_id)).and_then(|r| decode_json(&r.payload))
    }

    pub fn set_category(&self, device_id: u64, category: PatientCategory) -> Result<(), GatewayError> {
        let mut meta = self.device_meta(device_id).unwrap_or_default();
        meta.category = Some(category);
        meta.updated_ms = self.clock.now_ms();
        self.put_meta(device_id, &meta)?;
        self.alerts.lock().expect("alert engine poisoned").set_category(device_id, category);
        Ok(())
    }

    /// Stored samples of one device with `t_ms` in `[from_ms, to_ms]`, ascending.
    pub fn query_vitals(&self, device_id: u64, from_ms: u64, to_ms: u64) -> Result<Vec<VitalSample>, GatewayError> {
        if from_ms > to_ms {
            return Err(GatewayError::Invalid(format!("from {from_ms} > to {to_ms}")));
        }
        Ok(self
            .store
            .range(RecordKind::Vital, device_id, from_ms, to_ms)
            .iter()
            .filter_map(|r| VitalSample::from_bytes(&r.payload))
            .map(|mut s| {
                s.device_id = device_id;
                s
            })
            .collect())
    }

    pub fn devices(&self) -> Vec<DeviceSummary> {
        let mut ids: BTreeSet<u64> = self.store.devices(RecordKind::Vital).into_iter().collect();
        ids.extend(self.store.devices(RecordKind::DeviceMeta));
        let links = self.links.lock().expect("links poisoned");
        ids.extend(links.keys());
        let engine = self.alerts.lock().expect("alert engine poisoned");
        let sessions = self.sessions.lock().expect("sessions poisoned");
        ids.into_iter()
            .map(|id| {
                let vitals = self.store.range(RecordKind::Vital, id, 0, u64::MAX);
                DeviceSummary {
                    device_id: id,
                    category: engine.category(id),
                    samples: vitals.len(),
                    last_t_ms: vitals.last().map(|r| r.key.record_id),
                    active_session: sessions.active.get(&id).copied(),
                    connected: links.get(&id).is_some_and(|l| l.producer.is_none()),
                }
            })
            .collect()
    }

    pub fn start_session(&self, device_id: u64, user: &str) -> Result<KmcSession, GatewayError> {
        let mut sessions = self.sessions.lock().expect("sessions poisoned");
        if let Some(id) = sessions.active.get(&device_id) {
            return Err(GatewayError::Conflict(format!("device {device_id} already has active session {id}")));
        }
        let s = KmcSession {
            session_id: sessions.next_id,
            device_id,
            start_ms: self.clock.now_ms(),
            end_ms: None,
            initiator: user.to_string(),
        };
        self.put_session(&s)?;
        sessions.next_id += 1;
        sessions.active.insert(device_id, s.session_id);
        Ok(s)
    }

    pub fn stop_session(&self, session_id: u64) -> Result<KmcSession, GatewayError> {
        let mut sessions = self.sessions.lock().expect("sessions poisoned");
        let mut s = self.session(session_id).ok_or_else(|| GatewayError::NotFound(format!("session {session_id}")))?;
        if !s.active() {
            return Err(GatewayError::Conflict(format!("session {session_id} already stopped")));
        }
        s.end_ms = Some(self.clock.now_ms().max(s.start_ms + 1));
        self.put_session(&s)?;
        sessions.active.remove(&s.device_id);
        Ok(s)
    }

    fn put_session(&self, s: &KmcSession) -> Result<(), GatewayError> {
        let key = RecordKey { kind: RecordKind::Session, device_id: s.device_id, record_id: s.session_id };
        self.store.put(key, s.end_ms.unwrap_or(s.start_ms), json(s))?;
        Ok(())
    }

    pub fn session(&self, session_id: u64) -> Option<KmcSession> {
        self.sessions_where(|s| s.session_id == session_id).pop()
    }

    pub fn sessions(&self, device_id: Option<u64>) -> Vec<KmcSession> {
        self.sessions_where(|s| device_id.is_none_or(|d| s.device_id == d))
    }

    pub fn sessions_where(&self, pred: impl Fn(&KmcSession) -> bool) -> Vec<KmcSession> {
        let mut out: Vec<KmcSession> = self
            .store
            .records_of(RecordKind::Session)
            .iter()
            .filter_map(|r| decode_json::<KmcSession>(&r.payload))
            .filter(|s| pred(s))
            .collect();
        out.sort_by_key(|s| s.session_id);
        out
    }

    pub fn annotate(&self, device_id: u64, author: &str, text: &str, t_ms: Option<u64>) -> Result<Annotation, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::Invalid("empty annotation".into()));
        }
        let a = Annotation {
            annotation_id: self.next_annotation.fetch_add(1, Ordering::Relaxed),
            device_id,
            t_ms: t_ms.unwrap_or_else(|| self.clock.now_ms()),
            author: author.to_string(),
            text: text.to_string(),
        };
        let key = RecordKey { kind: RecordKind::Annotation, device_id, record_id: a.annotation_id };
        self.store.put(key, a.t_ms, json(&a))?;
        Ok(a)
    }

    pub fn annotations(&self, device_id: u64) -> Vec<Annotation> {
        self.store
            .range(RecordKind::Annotation, device_id, 0, u64::MAX)
            .iter()
            .filter_map(|r| decode_json(&r.payload))
            .collect()
    }

    pub fn alerts(&self, state: Option<AlertState>) -> Vec<Alert> {
        self.alerts.lock().expect("alert engine poisoned").alerts(state)
    }

    pub fn acknowledge(&self, alert_id: u64, user: &str) -> Result<Alert, GatewayError> {
        let change = self.alerts.lock().expect("alert engine poisoned").acknowledge(alert_id, user, None)?;
        self.emit(GatewayEvent::Alert { change: change.kind, alert: change.alert.clone() });
        Ok(change.alert)
    }

    pub fn suppress(&self, alert_id: u64) -> Result<Alert, GatewayError> {
        let change = self.alerts.lock().expect("alert engine poisoned").suppress(alert_id)?;
        self.emit(GatewayEvent::Alert { change: change.kind, alert: change.alert.clone() });
        Ok(change.alert)
    }

    /// Run the alert engine directly (tests, tooling).
    pub fn with_alerts<R>(&self, f: impl FnOnce(&mut AlertEngine) -> R) -> R {
        f(&mut self.alerts.lock().expect("alert engine poisoned"))
    }

    pub fn sync_status(&self) -> SyncStatus {
        let mut st = self.sync_status.lock().expect("sync status poisoned").clone();
        st.running = self.sync_running.load(Ordering::SeqCst);
        st.cursor = self.store.sync_cursor().unwrap_or(0);
        st.head_cursor = self.store.head_cursor();
        st.pending = self.store.changed_since(st.cursor.min(st.head_cursor)).len();
        st
    }

    /// One sync pass. Returns `None` when a pass is already running.
    pub fn sync_with(&self, link: &mut dyn AggregationLink, config: &SyncConfig) -> Result<Option<SyncReport>, GatewayError> {
        if self.sync_running.swap(true, Ordering::SeqCst) {
            return Ok(None);
        }
        self.emit(GatewayEvent::Sync { status: self.sync_status() });
        let result = sync_once(&self.store, link, config, self.clock.as_ref());
        {
            let mut st = self.sync_status.lock().expect("sync status poisoned");
            st.last_sync_ms = Some(self.clock.now_ms());
            match &result {
                Ok(r) => {
                    st.last_report = Some(r.clone());
                    st.last_error = r.exhausted.then(|| "retries exhausted".to_string());
                }
                Err(e) => st.last_error = Some(e.to_string()),
            }
        }
        self.sync_running.store(false, Ordering::SeqCst);
        self.emit(GatewayEvent::Sync { status: self.sync_status() });
        Ok(Some(result?))
    }

    pub fn is_syncing(&self) -> bool {
        self.sync_running.load(Ordering::SeqCst)
    }

    pub fn stats(&self) -> GatewayStats {
        let mut lat = self.latencies.lock().expect("latencies poisoned").clone();
        let links = self.links.lock().expect("links poisoned");
        let ring_dropped = self.consumers.lock().expect("consumers poisoned").values().map(|c| c.dropped()).sum();
        GatewayStats {
            frames: self.frames.load(Ordering::Relaxed),
            samples: self.samples.load(Ordering::Relaxed),
            rejects: self.rejects.load(Ordering::Relaxed),
            ring_dropped,
            connected: links.values().filter(|l| l.producer.is_none()).count(),
            latency: LatencyStats::from_micros(&mut lat),
            alerts: self.alerts.lock().expect("alert engine poisoned").stats(),
        }
    }
}

/// Producer side for one connected device.
pub struct DeviceIngest {
    device_id: u64,
    rx: DeviceReceiver,
    producer: Option<Producer<Queued>>,
    gateway: Arc<Gateway>,
}

impl DeviceIngest {
    pub fn device_id(&self) -> u64 {
        self.device_id
    }

    /// Authenticate one wire frame and enqueue it. Never blocks; a full ring
    /// overwrites its oldest frame.
    pub fn receive(&mut self, bytes: &[u8]) -> Result<PushOutcome, GatewayError> {
        let received = Instant::now();
        let frame = match RawFrame::parse(bytes).and_then(|raw| self.rx.accept(&raw)) {
            Ok(f) => f,
            Err(e) => return self.gateway.reject(e),
        };
        let producer = self.producer.as_mut().expect("producer present until drop");
        Ok(producer.push(Queued { frame, received }))
    }
}

impl Drop for DeviceIngest {
    fn drop(&mut self) {
        if let Ok(mut links) = self.gateway.links.lock() {
            if let Some(slot) = links.get_mut(&self.device_id) {
                slot.producer = self.producer.take();
                slot.last_seq = self.rx.last_seq();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;
    use crate::transport::{encode_batch, FleetKey, FrameSender};
    use crate::vitals::SampleFlags;

    const FLEET: FleetKey = FleetKey([7; 32]);

    fn gateway(clock: &SimClock) -> Arc<Gateway> {
        Gateway::new(
            Arc::new(Store::in_memory(&[3; 32])),
            Arc::new(FLEET),
            Arc::new(clock.clone()),
            GatewayConfig::default(),
        )
        .unwrap()
    }

    fn sample(dev: u64, t: u64) -> VitalSample {
        VitalSample { device_id: dev, t_ms: t, hr: 14_000, spo2: 9_700, rr: 4_500, temp: 3_680, motion: 0, flags: SampleFlags(0) }
    }

    fn batch_frame(tx: &mut FrameSender, samples: &[VitalSample]) -> Vec<u8> {
        tx.build(FrameType::VitalsBatch, &encode_batch(samples).unwrap()).unwrap()
    }

    #[test]
    fn five_sample_batch_stores_five() {
        let clock = SimClock::new(0);
        let gw = gateway(&clock);
        let samples: Vec<_> = (0..5).map(|i| sample(4, i * 1000)).collect();
        let frame = Frame { frame_type: FrameType::VitalsBatch, device_id: 4, seq: 1, nonce_ctr: 1, payload: encode_batch(&samples).unwrap() };
        assert_eq!(gw.ingest(frame).unwrap(), 5);
        assert_eq!(gw.store().count(RecordKind::Vital), 5);
        assert_eq!(gw.query_vitals(4, 0, 10_000).unwrap(), samples);
    }

    #[test]
    fn undecodable_batch_counts_as_reject() {
        let gw = gateway(&SimClock::new(0));
        let frame = Frame { frame_type: FrameType::VitalsBatch, device_id: 4, seq: 1, nonce_ctr: 1, payload: vec![0xFF; 3] };
        assert!(gw.ingest(frame).is_err());
        assert_eq!((gw.stats().rejects, gw.store().count(RecordKind::Vital)), (1, 0));
    }

    #[test]
    fn static_features_wait_for_flush() {
        let clock = SimClock::new(0);
        let gw = gateway(&clock);
        let f = FeaturePayload { static_features: vec![1.5, 2.0], semistatic_features: vec![0.25] };
        let frame = Frame { frame_type: FrameType::StaticFeatures, device_id: 9, seq: 1, nonce_ctr: 1, payload: f.encode() };
        assert_eq!(gw.ingest(frame).unwrap(), 0);
        assert!(gw.device_meta(9).is_none());
        gw.tick(59_999).unwrap();
        assert!(gw.device_meta(9).is_none());
        gw.tick(60_000).unwrap();
        assert_eq!(gw.device_meta(9).unwrap().static_features, vec![1.5, 2.0]);
    }

    #[test]
    fn query_edges() {
        let gw = gateway(&SimClock::new(0));
        assert!(gw.query_vitals(1, 0, 100).unwrap().is_empty());
        let samples: Vec<_> = (1..=3).map(|i| sample(1, i * 1000)).collect();
        gw.store_samples(1, samples.clone(), Instant::now()).unwrap();
        assert_eq!(gw.query_vitals(1, 0, 10_000).unwrap(), samples);
        assert!(gw.query_vitals(1, 5_000, 9_000).unwrap().is_empty());
        assert!(gw.query_vitals(2, 0, 10_000).unwrap().is_empty());
        assert!(gw.query_vitals(1, 10, 5).is_err());
    }

    #[test]
    fn ring_path_and_replay_across_reconnect() {
        let gw = gateway(&SimClock::new(0));
        let mut tx = FrameSender::new(3, FLEET.device_key(3));
        let mut ing = gw.connect(3).unwrap();
        assert!(matches!(gw.connect(3), Err(GatewayError::Conflict(_))));
        let f1 = batch_frame(&mut tx, &[sample(3, 0), sample(3, 1000)]);
        ing.receive(&f1).unwrap();
        assert_eq!(gw.drain(), DrainStats { frames: 1, samples: 2 });
        drop(ing);
        let mut ing = gw.connect(3).unwrap();
        assert!(ing.receive(&f1).is_err());
        ing.receive(&batch_frame(&mut tx, &[sample(3, 2000)])).unwrap();
        assert_eq!(gw.drain().samples, 1);
        assert_eq!(gw.stats().rejects, 1);
        assert!(gw.connect(99).is_ok());
    }

    #[test]
    fn full_ring_overwrites_oldest() {
        let store = Arc::new(Store::in_memory(&[3; 32]));
        let cfg = GatewayConfig { ring_capacity: 4, ..GatewayConfig::default() };
        let gw = Gateway::new(store, Arc::new(FLEET), Arc::new(SimClock::new(0)), cfg).unwrap();
        let mut tx = FrameSender::new(1, FLEET.device_key(1));
        let mut ing = gw.connect(1).unwrap();
        for i in 0..5 {
            ing.receive(&batch_frame(&mut tx, &[sample(1, i * 1000)])).unwrap();
        }
        gw.drain();
        let kept: Vec<u64> = gw.query_vitals(1, 0, u64::MAX).unwrap().iter().map(|s| s.t_ms).collect();
        assert_eq!(kept, vec![1000, 2000, 3000, 4000]);
        assert_eq!(gw.stats().ring_dropped, 1);
    }

    #[test]
    fn session_lifecycle() {
        let clock = SimClock::new(0);
        let gw = gateway(&clock);
        let s = gw.start_session(5, "nurse").unwrap();
        assert!(matches!(gw.start_session(5, "mum"), Err(GatewayError::Conflict(_))));
        clock.advance(3_600_000);
        let done = gw.stop_session(s.session_id).unwrap();
        assert_eq!(done.duration_ms(0), 3_600_000);
        assert!(matches!(gw.stop_session(42), Err(GatewayError::NotFound(_))));
        assert!(matches!(gw.stop_session(s.session_id), Err(GatewayError::Conflict(_))));
        let all = gw.sessions(Some(5));
        assert_eq!(all.len(), 1);
        assert!(!all[0].active());
        assert_eq!(gw.store().get(&RecordKey { kind: RecordKind::Session, device_id: 5, record_id: 1 }).unwrap().version, 2);
    }

    #[test]
    fn sessions_and_categories_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let clock = SimClock::new(1_000);
        let open = || {
            let store = Arc::new(Store::open(dir.path(), &[3; 32]).unwrap());
            Gateway::new(store, Arc::new(FLEET), Arc::new(clock.clone()), GatewayConfig::default()).unwrap()
        };
        let gw = open();
        gw.start_session(2, "nurse").unwrap();
        gw.set_category(2, PatientCategory::ExtremePreterm).unwrap();
        gw.annotate(2, "nurse", "fed", None).unwrap();
        drop(gw);
        let gw = open();
        assert!(matches!(gw.start_session(2, "nurse"), Err(GatewayError::Conflict(_))));
        assert_eq!(gw.with_alerts(|e| e.category(2)), PatientCategory::ExtremePreterm);
        assert_eq!(gw.annotate(2, "nurse", "again", None).unwrap().annotation_id, 2);
    }

    #[test]
    fn alerts_stream_and_ack() {
        let gw = gateway(&SimClock::new(0));
        let mut rx = gw.subscribe();
        let low: Vec<_> = (0..10).map(|i| VitalSample { spo2: 8_000, ..sample(1, i * 1000) }).collect();
        gw.store_samples(1, low, Instant::now()).unwrap();
        let mut raised = None;
        while let Ok(ev) = rx.try_recv() {
            if let GatewayEvent::Alert { change: ChangeKind::Raised, alert } = ev {
                raised = Some(alert.alert_id);
            }
        }
        let id = raised.expect("sustained desaturation raises");
        let a = gw.acknowledge(id, "nurse").unwrap();
        assert_eq!(a.state, AlertState::Acknowledged);
        assert!(gw.alerts(Some(AlertState::Raised)).is_empty());
        let json = serde_json::to_value(GatewayEvent::Alert { change: ChangeKind::Acknowledged, alert: a }).unwrap();
        assert_eq!(json["type"], "alert");
    }

    struct AlwaysHigh;
    impl RiskHook for AlwaysHigh {
        fn on_sample(&self, _: &VitalSample) -> Option<f64> {
            Some(0.9)
        }
    }

    #[test]
    fn risk_hook_feeds_alerts() {
        let gw = gateway(&SimClock::new(0));
        gw.set_risk_hook(Some(Arc::new(AlwaysHigh)));
        gw.store_samples(1, vec![sample(1, 0)], Instant::now()).unwrap();
        let alerts = gw.alerts(None);
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].source, crate::alerts::EventSource::Risk);
    }

    #[test]
    fn retention_prunes_old_vitals() {
        let store = Arc::new(Store::in_memory(&[3; 32]));
        let cfg = GatewayConfig { retain_days: Some(1), ..GatewayConfig::default() };
        let gw = Gateway::new(store, Arc::new(FLEET), Arc::new(SimClock::new(0)), cfg).unwrap();
        gw.store_samples(1, vec![sample(1, 0), sample(1, 2 * DAY_MS)], Instant::now()).unwrap();
        gw.tick(2 * DAY_MS + 1).unwrap();
        assert_eq!(gw.query_vitals(1, 0, u64::MAX).unwrap().len(), 1);
    }
}
