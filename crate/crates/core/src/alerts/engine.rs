//! Streaming alert evaluator.
//!
//! Each (device, source, direction) stream keeps one open cluster. The
//! first reading of a cluster is scored against the Beta-mean prior; each
//! later reading in the same cluster is scored against the previous
//! reading's posterior, so a sustained excursion accumulates evidence while
//! an isolated artifact stays below the gate. A cluster becomes a visible
//! alert the moment its posterior reaches the gate. Clusters that close
//! without reaching it are counted as gated out and leave no alert.

use super::cluster::ClusterConfig;
use super::posterior::{posterior, EventHistory, ReliabilityState};
use super::thresholds::{threshold_check, Direction, EventSource, PatientCategory, RawEvent, ThresholdSet};
use super::{Alert, AlertError, AlertState};
use crate::vitals::VitalSample;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlertConfig {
    pub cluster: ClusterConfig,
    /// Minimum posterior for a cluster to be surfaced.
    pub gate: f64,
    pub quiet_ms: u64,
    /// Minimum high-risk probability for a model output to count as an event.
    pub risk_gate: f64,
    pub reliability: ReliabilityState,
    pub default_category: PatientCategory,
}

impl Default for AlertConfig {
    fn default() -> Self {
        AlertConfig {
            cluster: ClusterConfig::default(),
            gate: 0.5,
            quiet_ms: 120_000,
            risk_gate: 0.7,
            reliability: ReliabilityState::default(),
            default_category: PatientCategory::Term,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Raised,
    Updated,
    Folded,
    Acknowledged,
    Suppressed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlertChange {
    pub kind: ChangeKind,
    pub alert: Alert,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStats {
    pub raw_events: u64,
    pub clusters_closed: u64,
    pub gated_out: u64,
    pub raised: u64,
    pub folded: u64,
}

type StreamKey = (u64, EventSource, Direction);

#[derive(Clone, Debug)]
struct OpenCluster {
    first_t: u64,
    last_t: u64,
    count: u32,
    last_p: f64,
    max_p: f64,
    alert_id: Option<u64>,
}

pub struct AlertEngine {
    config: AlertConfig,
    thresholds: ThresholdSet,
    categories: HashMap<u64, PatientCategory>,
    reliability: HashMap<(u64, EventSource), ReliabilityState>,
    open: HashMap<StreamKey, OpenCluster>,
    quiet: HashMap<StreamKey, (u64, u64)>,
    alerts: BTreeMap<u64, Alert>,
    latest_t: HashMap<u64, u64>,
    next_id: u64,
    stats: EngineStats,
}

impl AlertEngine {
    pub fn new(config: AlertConfig, thresholds: ThresholdSet) -> Result<Self, AlertError> {
        config.cluster.validate()?;
        if !(0.0..=1.0).contains(&config.gate) || !(0.0..=1.0).contains(&config.risk_gate) {
            return Err(AlertError::Config("gates must lie in [0, 1]".into()));
        }
        Ok(AlertEngine {
            config,
            thresholds,
            categories: HashMap::new(),
            reliability: HashMap::new(),
            open: HashMap::new(),
            quiet: HashMap::new(),
            alerts: BTreeMap::new(),
            latest_t: HashMap::new(),
            next_id: 1,
            stats: EngineStats::default(),
        })
    }

    pub fn with_defaults() -> Self {
        Self::new(AlertConfig::default(), ThresholdSet::default()).expect("default config is valid")
    }

    pub fn config(&self) -> &AlertConfig {
        &self.config
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn set_category(&mut self, device_id: u64, category: PatientCategory) {
        self.categories.insert(device_id, category);
    }

    pub fn category(&self, device_id: u64) -> PatientCategory {
        self.categories.get(&device_id).copied().unwrap_or(self.config.default_category)
    }

    pub fn set_reliability(&mut self, device_id: u64, source: EventSource, state: ReliabilityState) {
        self.reliability.insert((device_id, source), state);
    }

    pub fn reliability(&self, device_id: u64, source: EventSource) -> ReliabilityState {
        self.reliability.get(&(device_id, source)).copied().unwrap_or(self.config.reliability)
    }

    pub fn history(&self, device_id: u64, source: EventSource) -> EventHistory {
        self.reliability(device_id, source).history
    }

    pub fn get(&self, id: u64) -> Option<&Alert> {
        self.alerts.get(&id)
    }

    pub fn alerts(&self, state: Option<AlertState>) -> Vec<Alert> {
        self.alerts.values().filter(|a| state.is_none_or(|s| a.state == s)).cloned().collect()
    }

    /// Run one sample through the threshold check and clustering.
    pub fn observe(&mut self, sample: &VitalSample) -> Vec<AlertChange> {
        self.note_time(sample.device_id, sample.t_ms);
        let profile = self.thresholds.get(self.category(sample.device_id)).clone();
        let events = threshold_check(sample, &profile);
        events.into_iter().filter_map(|e| self.process(e, None)).collect()
    }

    /// Feed a model risk output; only `p_high >= risk_gate` becomes an event.
    pub fn observe_risk(&mut self, device_id: u64, t_ms: u64, p_high: f64) -> Option<AlertChange> {
        self.note_time(device_id, t_ms);
        if p_high < self.config.risk_gate {
            return None;
        }
        let ev = RawEvent {
            device_id,
            t_ms,
            source: EventSource::Risk,
            direction: Direction::High,
            value: (p_high.clamp(0.0, 1.0) * 10_000.0).round() as u32,
            degraded: false,
        };
        self.process(ev, Some(p_high))
    }

    fn note_time(&mut self, device_id: u64, t_ms: u64) {
        let e = self.latest_t.entry(device_id).or_insert(t_ms);
        *e = (*e).max(t_ms);
    }

    /// Score and cluster one raw event.
    pub fn process(&mut self, ev: RawEvent, fixed_p: Option<f64>) -> Option<AlertChange> {
        self.stats.raw_events += 1;
        let key = (ev.device_id, ev.source, ev.direction);
        if let Some(&(id, ack_t)) = self.quiet.get(&key) {
            if ev.t_ms <= ack_t + self.config.quiet_ms {
                let alert = self.alerts.get_mut(&id).expect("quiet entries point at live alerts");
                alert.event_count += 1;
                alert.last_t_ms = alert.last_t_ms.max(ev.t_ms);
                self.stats.folded += 1;
                return Some(AlertChange { kind: ChangeKind::Folded, alert: alert.clone() });
            }
            self.quiet.remove(&key);
        }
        let rel = self.reliability(ev.device_id, ev.source);
        let r = rel.r(ev.degraded);
        let window = self.open.get(&key).map(|c| self.config.cluster.window_ms(c.count));
        match (self.open.get_mut(&key), window) {
            (Some(c), Some(w)) if ev.t_ms.saturating_sub(c.last_t) <= w => {
                let p = fixed_p.unwrap_or_else(|| posterior(c.last_p, r));
                c.count += 1;
                c.last_t = c.last_t.max(ev.t_ms);
                c.last_p = p;
                c.max_p = c.max_p.max(p);
                let c = c.clone();
                match c.alert_id {
                    Some(id) => {
                        let window_ms = self.config.cluster.window_ms(c.count);
                        let a = self.alerts.get_mut(&id).expect("open cluster alert exists");
                        a.event_count = c.count;
                        a.last_t_ms = c.last_t;
                        a.posterior = c.max_p;
                        a.window_ms = window_ms;
                        Some(AlertChange { kind: ChangeKind::Updated, alert: a.clone() })
                    }
                    None if c.max_p >= self.config.gate => Some(self.raise(key, &c)),
                    None => None,
                }
            }
            _ => {
                self.close(&key);
                let p = fixed_p.unwrap_or_else(|| posterior(rel.history.prior(), r));
                let c = OpenCluster { first_t: ev.t_ms, last_t: ev.t_ms, count: 1, last_p: p, max_p: p, alert_id: None };
                self.open.insert(key, c.clone());
                (p >= self.config.gate).then(|| self.raise(key, &c))
            }
        }
    }

    fn raise(&mut self, key: StreamKey, c: &OpenCluster) -> AlertChange {
        let id = self.next_id;
        self.next_id += 1;
        let alert = Alert {
            alert_id: id,
            device_id: key.0,
            source: key.1,
            direction: key.2,
            first_t_ms: c.first_t,
            last_t_ms: c.last_t,
            event_count: c.count,
            posterior: c.max_p,
            state: AlertState::Raised,
            window_ms: self.config.cluster.window_ms(c.count),
            acknowledged_by: None,
        };
        self.alerts.insert(id, alert.clone());
        if let Some(open) = self.open.get_mut(&key) {
            open.alert_id = Some(id);
        }
        self.stats.raised += 1;
        AlertChange { kind: ChangeKind::Raised, alert }
    }

    fn close(&mut self, key: &StreamKey) {
        if let Some(c) = self.open.remove(key) {
            self.stats.clusters_closed += 1;
            if c.alert_id.is_none() {
                self.stats.gated_out += 1;
            }
        }
    }

    /// Close clusters whose gap window has elapsed by `now_ms`.
    pub fn tick(&mut self, now_ms: u64) {
        let cfg = self.config.cluster;
        let stale: Vec<StreamKey> = self
            .open
            .iter()
            .filter(|(_, c)| now_ms.saturating_sub(c.last_t) > cfg.window_ms(c.count))
            .map(|(k, _)| *k)
            .collect();
        for k in stale {
            self.close(&k);
        }
    }

    /// Close every open cluster.
    pub fn flush(&mut self) {
        let keys: Vec<StreamKey> = self.open.keys().copied().collect();
        for k in keys {
            self.close(&k);
        }
    }

    /// Acknowledge a raised alert. Repeating the call is a no-op. The quiet
    /// period starts at `at_ms`, or at the device's latest observed sample.
    pub fn acknowledge(&mut self, id: u64, user: &str, at_ms: Option<u64>) -> Result<AlertChange, AlertError> {
        let alert = self.alerts.get(&id).ok_or(AlertError::NotFound(id))?;
        if alert.state == AlertState::Acknowledged {
            return Ok(AlertChange { kind: ChangeKind::Acknowledged, alert: alert.clone() });
        }
        let key = (alert.device_id, alert.source, alert.direction);
        let ack_t = at_ms.unwrap_or_else(|| self.latest_t.get(&key.0).copied().unwrap_or(alert.last_t_ms).max(alert.last_t_ms));
        let alert = self.alerts.get_mut(&id).expect("checked above");
        alert.transition(AlertState::Acknowledged)?;
        alert.acknowledged_by = Some(user.to_string());
        let snapshot = alert.clone();
        self.rel_mut(key.0, key.1).history.confirm();
        if self.open.get(&key).is_some_and(|c| c.alert_id == Some(id)) {
            self.close(&key);
        }
        self.quiet.insert(key, (id, ack_t));
        Ok(AlertChange { kind: ChangeKind::Acknowledged, alert: snapshot })
    }

    /// Mark an alert as a false alarm.
    pub fn suppress(&mut self, id: u64) -> Result<AlertChange, AlertError> {
        let alert = self.alerts.get_mut(&id).ok_or(AlertError::NotFound(id))?;
        alert.transition(AlertState::Suppressed)?;
        let snapshot = alert.clone();
        let key = (snapshot.device_id, snapshot.source, snapshot.direction);
        self.rel_mut(key.0, key.1).history.reject();
        if self.open.get(&key).is_some_and(|c| c.alert_id == Some(id)) {
            self.close(&key);
        }
        if self.quiet.get(&key).is_some_and(|&(q, _)| q == id) {
            self.quiet.remove(&key);
        }
        Ok(AlertChange { kind: ChangeKind::Suppressed, alert: snapshot })
    }

    fn rel_mut(&mut self, device_id: u64, source: EventSource) -> &mut ReliabilityState {
        let default = self.config.reliability;
        self.reliability.entry((device_id, source)).or_insert(default)
    }
}
