//! Non-vital record payloads kept in the store as JSON.

use crate::alerts::PatientCategory;
use serde::{Deserialize, Serialize};

/// A skin-to-skin care session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmcSession {
    pub session_id: u64,
    pub device_id: u64,
    pub start_ms: u64,
    pub end_ms: Option<u64>,
    pub initiator: String,
}

impl KmcSession {
    pub fn active(&self) -> bool {
        self.end_ms.is_none()
    }

    pub fn duration_ms(&self, now_ms: u64) -> u64 {
        self.end_ms.unwrap_or(now_ms).saturating_sub(self.start_ms)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: u64,
    pub device_id: u64,
    pub t_ms: u64,
    pub author: String,
    pub text: String,
}

/// Per-device metadata; static feature vectors arrive from the device.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceMeta {
    pub category: Option<PatientCategory>,
    #[serde(default)]
    pub static_features: Vec<f64>,
    #[serde(default)]
    pub semistatic_features: Vec<f64>,
    pub updated_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub device_id: u64,
    pub category: PatientCategory,
    pub samples: usize,
    pub last_t_ms: Option<u64>,
    pub active_session: Option<u64>,
    pub connected: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_micros(samples: &mut [u64]) -> Self {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        samples.sort_unstable();
        let q = |p: f64| {
            let idx = ((p * samples.len() as f64).ceil() as usize).clamp(1, samples.len()) - 1;
            samples[idx] as f64 / 1_000.0
        };
        LatencyStats { count: samples.len(), p50_ms: q(0.50), p99_ms: q(0.99), max_ms: *samples.last().unwrap() as f64 / 1_000.0 }
    }
}
