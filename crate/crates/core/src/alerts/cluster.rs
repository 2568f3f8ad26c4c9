//! Greedy temporal clustering with a geometrically growing gap window.

use super::{Alert, AlertError, AlertState, RawEvent};
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub w0_ms: u64,
    pub growth: f64,
    pub wmax_ms: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { w0_ms: 30_000, growth: 1.5, wmax_ms: 300_000 }
    }
}

impl ClusterConfig {
    /// Largest gap an open cluster holding `members` events will bridge:
    /// `min(w0 * growth^(members - 1), wmax)`.
    pub fn window_ms(&self, members: u32) -> u64 {
        let exp = members.saturating_sub(1).min(1_000) as i32;
        let w = self.w0_ms as f64 * self.growth.powi(exp);
        if w >= self.wmax_ms as f64 {
            self.wmax_ms
        } else {
            w.floor() as u64
        }
    }

    pub fn validate(&self) -> Result<(), AlertError> {
        if self.growth < 1.0 || !self.growth.is_finite() || self.w0_ms == 0 || self.wmax_ms < self.w0_ms {
            return Err(AlertError::Config("cluster window needs w0 > 0, growth >= 1 and wmax >= w0".into()));
        }
        Ok(())
    }
}

/// Split ascending timestamps into clusters. Each range indexes `times`.
pub fn partition(times: &[u64], cfg: &ClusterConfig) -> Result<Vec<Range<usize>>, AlertError> {
    if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(AlertError::Unordered { index: i + 1 });
    }
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..times.len() {
        let members = (i - start) as u32;
        if times[i] - times[i - 1] > cfg.window_ms(members) {
            out.push(start..i);
            start = i;
        }
    }
    if !times.is_empty() {
        out.push(start..times.len());
    }
    Ok(out)
}

/// An event with its false-alarm posterior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredEvent {
    pub event: RawEvent,
    pub posterior: f64,
}

/// Cluster one (device, source, direction) stream into alerts. Alerts are
/// numbered from `first_id` and start in the raised state.
pub fn cluster(events: &[ScoredEvent], cfg: &ClusterConfig, first_id: u64) -> Result<Vec<Alert>, AlertError> {
    if let Some(first) = events.first() {
        let e0 = first.event;
        if events.iter().any(|s| {
            (s.event.device_id, s.event.source, s.event.direction) != (e0.device_id, e0.source, e0.direction)
        }) {
            return Err(AlertError::MixedStream);
        }
    }
    let times: Vec<u64> = events.iter().map(|e| e.event.t_ms).collect();
    let parts = partition(&times, cfg)?;
    Ok(parts
        .into_iter()
        .enumerate()
        .map(|(n, r)| {
            let members = &events[r.clone()];
            let e0 = members[0].event;
            Alert {
                alert_id: first_id + n as u64,
                device_id: e0.device_id,
                source: e0.source,
                direction: e0.direction,
                first_t_ms: e0.t_ms,
                last_t_ms: members[members.len() - 1].event.t_ms,
                event_count: members.len() as u32,
                posterior: members.iter().map(|m| m.posterior).fold(0.0, f64::max),
                state: AlertState::Raised,
                window_ms: cfg.window_ms(members.len() as u32),
                acknowledged_by: None,
            }
        })
        .collect())
}
