//! Raw versus posterior-gated alarm counts on a labeled scenario.
//!
//! Ground truth comes from the scenario itself: readings inside a scripted
//! event window for the matching vital are true, everything else (glitches,
//! noise excursions) is false.

use super::cluster::partition;
use super::engine::{AlertConfig, AlertEngine};
use super::thresholds::{threshold_check, EventSource, PatientCategory, RawEvent, ThresholdSet};
use super::AlertError;
use crate::vitalsim::{generate_sample, Scenario, SimError};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuppressionReport {
    pub raw_alarms: usize,
    pub filtered_alarms: usize,
    pub raw_false_alarms: usize,
    pub filtered_false_alarms: usize,
    /// Scripted events that produced at least one raw alarm.
    pub true_episodes: usize,
    /// Of those, episodes with no alarm left after gating.
    pub missed_true_events: usize,
}

impl SuppressionReport {
    pub fn false_alarm_reduction(&self) -> f64 {
        if self.raw_false_alarms == 0 {
            0.0
        } else {
            1.0 - self.filtered_false_alarms as f64 / self.raw_false_alarms as f64
        }
    }
}

fn episodes(scenario: &Scenario) -> Vec<(EventSource, u64, u64)> {
    scenario
        .events
        .iter()
        .map(|e| {
            let start = scenario.start_ms + (e.onset_s * 1000.0).round() as u64;
            let end = start + (e.duration_s * 1000.0).round() as u64;
            (EventSource::from(e.kind.vital()), start, end)
        })
        .collect()
}

fn overlaps(source: EventSource, first: u64, last: u64, ep: &(EventSource, u64, u64)) -> bool {
    ep.0 == source && first < ep.2 && last >= ep.1
}

/// Sample `scenario` at 1 Hz for one device and compare alarm counts with
/// and without the posterior gate.
pub fn evaluate_suppression(
    scenario: &Scenario,
    device_id: u64,
    category: PatientCategory,
    thresholds: &ThresholdSet,
    config: &AlertConfig,
) -> Result<SuppressionReport, EvalError> {
    let mut engine = AlertEngine::new(config.clone(), thresholds.clone())?;
    engine.set_category(device_id, category);
    let profile = thresholds.get(category);
    let mut streams: BTreeMap<(EventSource, super::Direction), Vec<RawEvent>> = BTreeMap::new();
    for i in 0..scenario.duration_s {
        let sample = generate_sample(scenario, device_id, scenario.start_ms + i * 1000)?;
        for ev in threshold_check(&sample, profile) {
            streams.entry((ev.source, ev.direction)).or_default().push(ev);
        }
        engine.observe(&sample);
    }
    engine.flush();

    let eps = episodes(scenario);
    let mut raw = Vec::new();
    for ((source, _), evs) in &streams {
        let times: Vec<u64> = evs.iter().map(|e| e.t_ms).collect();
        for r in partition(&times, &config.cluster)? {
            raw.push((*source, times[r.start], times[r.end - 1]));
        }
    }
    let filtered: Vec<(EventSource, u64, u64)> =
        engine.alerts(None).iter().map(|a| (a.source, a.first_t_ms, a.last_t_ms)).collect();

    let is_true = |c: &(EventSource, u64, u64)| eps.iter().any(|ep| overlaps(c.0, c.1, c.2, ep));
    let hit = |set: &[(EventSource, u64, u64)], ep: &(EventSource, u64, u64)| set.iter().any(|c| overlaps(c.0, c.1, c.2, ep));
    let detected: Vec<_> = eps.iter().filter(|ep| hit(&raw, ep)).collect();
    Ok(SuppressionReport {
        raw_alarms: raw.len(),
        filtered_alarms: filtered.len(),
        raw_false_alarms: raw.iter().filter(|c| !is_true(c)).count(),
        filtered_false_alarms: filtered.iter().filter(|c| !is_true(c)).count(),
        true_episodes: detected.len(),
        missed_true_events: detected.iter().filter(|ep| !hit(&filtered, ep)).count(),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Alert(#[from] AlertError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alerts::{posterior, Reliability};
    use crate::vitalsim::NoiseStd;

    fn run(s: &Scenario, cfg: &AlertConfig) -> SuppressionReport {
        evaluate_suppression(s, 1, PatientCategory::Term, &ThresholdSet::default(), cfg).unwrap()
    }

    #[test]
    fn perfect_sensor_keeps_every_alarm() {
        let mut s = Scenario::builtin("desaturation", 900, 3).unwrap();
        s.noise = NoiseStd::ZERO;
        let mut cfg = AlertConfig::default();
        cfg.reliability.reliability = Reliability::new(1.0 - 1e-9).unwrap();
        let r = run(&s, &cfg);
        assert!(r.raw_alarms > 0);
        assert_eq!(r.filtered_alarms, r.raw_alarms);
    }

    #[test]
    fn glitch_only_stream_fully_suppressed() {
        let mut s = Scenario::builtin("glitchy", 3_600, 5).unwrap();
        s.events.clear();
        s.noise = NoiseStd::ZERO;
        let p = posterior(0.05, 0.9);
        assert!((p - 0.3214).abs() < 1e-4 && p < 0.5);
        let r = run(&s, &AlertConfig::default());
        assert_eq!(r.raw_alarms, s.glitches.len());
        assert_eq!(r.filtered_alarms, 0);
    }

    #[test]
    fn mixed_stream_fewer_false_alarms_no_missed_events() {
        let s = Scenario::builtin("glitchy", 3_600, 11).unwrap();
        let r = run(&s, &AlertConfig::default());
        assert!(r.raw_false_alarms > 0);
        assert!(r.filtered_false_alarms < r.raw_false_alarms);
        assert_eq!(r.true_episodes, 1);
        assert_eq!(r.missed_true_events, 0);
    }
}
