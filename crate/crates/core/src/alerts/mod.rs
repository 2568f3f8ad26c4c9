//! Threshold alerts with a Bayesian false-alarm gate, temporal clustering
//! and acknowledgment-driven quiet periods.

mod cluster;
mod engine;
mod evaluate;
mod posterior;
mod thresholds;

pub use cluster::{cluster, partition, ClusterConfig, ScoredEvent};
pub use engine::{AlertChange, AlertConfig, AlertEngine, ChangeKind, EngineStats};
pub use evaluate::{evaluate_suppression, SuppressionReport};
pub use posterior::{posterior, EventHistory, Reliability, ReliabilityState};
pub use thresholds::{
    threshold_check, Bounds, Direction, EventSource, PatientCategory, RawEvent, ThresholdProfile, ThresholdSet,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlertError {
    #[error("alert {0} not found")]
    NotFound(u64),
    #[error("alert {id}: {from:?} -> {to:?} is not allowed")]
    InvalidTransition { id: u64, from: AlertState, to: AlertState },
    #[error("events not in time order at index {index}")]
    Unordered { index: usize },
    #[error("events from different device/source/direction streams")]
    MixedStream,
    #[error("alert config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlertState {
    Raised,
    Acknowledged,
    Suppressed,
}

impl AlertState {
    pub fn can_become(self, to: AlertState) -> bool {
        matches!(
            (self, to),
            (AlertState::Raised, AlertState::Acknowledged)
                | (AlertState::Raised, AlertState::Suppressed)
                | (AlertState::Acknowledged, AlertState::Suppressed)
        )
    }
}

impl std::str::FromStr for AlertState {
    type Err = AlertError;

    fn from_str(s: &str) -> Result<Self, AlertError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raised" => Ok(AlertState::Raised),
            "acknowledged" => Ok(AlertState::Acknowledged),
            "suppressed" => Ok(AlertState::Suppressed),
            other => Err(AlertError::Config(format!("unknown alert state '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: u64,
    pub device_id: u64,
    pub source: EventSource,
    pub direction: Direction,
    pub first_t_ms: u64,
    pub last_t_ms: u64,
    pub event_count: u32,
    pub posterior: f64,
    pub state: AlertState,
    /// Gap window of the cluster when it last changed.
    pub window_ms: u64,
    pub acknowledged_by: Option<String>,
}

impl Alert {
    pub fn transition(&mut self, to: AlertState) -> Result<(), AlertError> {
        if !self.state.can_become(to) {
            return Err(AlertError::InvalidTransition { id: self.alert_id, from: self.state, to });
        }
        self.state = to;
        Ok(())
    }
}
