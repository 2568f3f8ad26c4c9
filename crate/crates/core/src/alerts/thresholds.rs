//! Per-category threshold profiles and the text format they load from.
//!
//! ```text
//! # natural units; bounds are inclusive (a reading equal to a bound is normal)
//! [very-preterm]
//! hr   = 100 190
//! spo2 = 88 100
//! rr   = 25 70
//! temp = 36.0 37.8
//! ```
//!
//! A section only needs the vitals it changes; the rest keep the built-in
//! values. The built-in values are placeholders, not clinical guidance.

use super::AlertError;
use crate::vitals::{VitalKind, VitalSample};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatientCategory {
    ExtremePreterm,
    VeryPreterm,
    ModerateLatePreterm,
    Term,
}

impl PatientCategory {
    pub const ALL: [PatientCategory; 4] = [
        PatientCategory::ExtremePreterm,
        PatientCategory::VeryPreterm,
        PatientCategory::ModerateLatePreterm,
        PatientCategory::Term,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PatientCategory::ExtremePreterm => "extreme-preterm",
            PatientCategory::VeryPreterm => "very-preterm",
            PatientCategory::ModerateLatePreterm => "moderate-late-preterm",
            PatientCategory::Term => "term",
        }
    }
}

impl fmt::Display for PatientCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatientCategory {
    type Err = AlertError;

    fn from_str(s: &str) -> Result<Self, AlertError> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| AlertError::Config(format!("unknown patient category '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: u16,
    pub high: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Low,
    High,
}

/// Which signal produced an event: a vital threshold or the risk model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventSource {
    Hr,
    Spo2,
    Rr,
    Temp,
    Risk,
}

impl From<VitalKind> for EventSource {
    fn from(k: VitalKind) -> Self {
        match k {
            VitalKind::Hr => EventSource::Hr,
            VitalKind::Spo2 => EventSource::Spo2,
            VitalKind::Rr => EventSource::Rr,
            VitalKind::Temp => EventSource::Temp,
        }
    }
}

impl EventSource {
    pub fn vital(self) -> Option<VitalKind> {
        match self {
            EventSource::Hr => Some(VitalKind::Hr),
            EventSource::Spo2 => Some(VitalKind::Spo2),
            EventSource::Rr => Some(VitalKind::Rr),
            EventSource::Temp => Some(VitalKind::Temp),
            EventSource::Risk => None,
        }
    }
}

/// One out-of-bounds reading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub device_id: u64,
    pub t_ms: u64,
    pub source: EventSource,
    pub direction: Direction,
    /// Centi-units for vitals; probability x 10000 for risk events.
    pub value: u32,
    pub degraded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    pub category: PatientCategory,
    /// Indexed by [`VitalKind::index`].
    pub bounds: [Bounds; 4],
}

fn b(low: f64, high: f64) -> Bounds {
    Bounds { low: (low * 100.0).round() as u16, high: (high * 100.0).round() as u16 }
}

impl ThresholdProfile {
    /// Built-in placeholder bounds (hr, spo2, rr, temp).
    pub fn default_for(category: PatientCategory) -> Self {
        let bounds = match category {
            PatientCategory::ExtremePreterm => [b(110.0, 190.0), b(88.0, 100.0), b(25.0, 75.0), b(36.0, 37.8)],
            PatientCategory::VeryPreterm => [b(100.0, 190.0), b(88.0, 100.0), b(25.0, 70.0), b(36.0, 37.8)],
            PatientCategory::ModerateLatePreterm => [b(100.0, 180.0), b(90.0, 100.0), b(25.0, 65.0), b(36.0, 37.8)],
            PatientCategory::Term => [b(100.0, 180.0), b(92.0, 100.0), b(25.0, 60.0), b(36.0, 37.8)],
        };
        ThresholdProfile { category, bounds }
    }

    pub fn get(&self, kind: VitalKind) -> Bounds {
        self.bounds[kind.index()]
    }

    pub fn validate(&self) -> Result<(), AlertError> {
        for kind in VitalKind::ALL {
            let bd = self.get(kind);
            if bd.low >= bd.high {
                return Err(AlertError::Config(format!("{}: {kind} low must be below high", self.category)));
            }
        }
        Ok(())
    }
}

/// Threshold check: one event per vital strictly outside its bounds.
pub fn threshold_check(sample: &VitalSample, profile: &ThresholdProfile) -> Vec<RawEvent> {
    VitalKind::ALL
        .into_iter()
        .filter_map(|kind| {
            let v = sample.get(kind);
            let bd = profile.get(kind);
            let direction = if v < bd.low {
                Direction::Low
            } else if v > bd.high {
                Direction::High
            } else {
                return None;
            };
            Some(RawEvent {
                device_id: sample.device_id,
                t_ms: sample.t_ms,
                source: kind.into(),
                direction,
                value: v as u32,
                degraded: sample.flags.degraded(),
            })
        })
        .collect()
}

/// All four category profiles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdSet {
    profiles: BTreeMap<PatientCategory, ThresholdProfile>,
}

impl Default for ThresholdSet {
    fn default() -> Self {
        ThresholdSet { profiles: PatientCategory::ALL.into_iter().map(|c| (c, ThresholdProfile::default_for(c))).collect() }
    }
}

impl ThresholdSet {
    pub fn get(&self, category: PatientCategory) -> &ThresholdProfile {
        &self.profiles[&category]
    }

    pub fn set(&mut self, profile: ThresholdProfile) -> Result<(), AlertError> {
        profile.validate()?;
        self.profiles.insert(profile.category, profile);
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, AlertError> {
        let mut set = ThresholdSet::default();
        let mut current: Option<ThresholdProfile> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| AlertError::Config(format!("line {}: {msg}", n + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if let Some(p) = current.take() {
                    set.set(p)?;
                }
                let cat: PatientCategory = name.parse()?;
                current = Some(set.get(cat).clone());
                continue;
            }
            let profile = current.as_mut().ok_or_else(|| err("bounds before any [category] header"))?;
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected 'vital = low high'"))?;
            let kind: VitalKind = key.trim().parse().map_err(|e: String| err(&e))?;
            let nums: Vec<f64> = value
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| err("bound is not a number")))
                .collect::<Result<_, _>>()?;
            let [lo, hi] = nums[..] else { return Err(err("expected two bounds")) };
            profile.bounds[kind.index()] = Bounds { low: kind.to_centi(lo), high: kind.to_centi(hi) };
        }
        if let Some(p) = current {
            set.set(p)?;
        }
        Ok(set)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in self.profiles.values() {
            out.push_str(&format!("[{}]\n", p.category));
            for kind in VitalKind::ALL {
                let bd = p.get(kind);
                out.push_str(&format!("{kind} = {} {}\n", bd.low as f64 / 100.0, bd.high as f64 / 100.0));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vitals::SampleFlags;

    fn sample(hr: u16, spo2: u16) -> VitalSample {
        VitalSample { device_id: 1, t_ms: 0, hr, spo2, rr: 4500, temp: 3680, motion: 0, flags: SampleFlags::default() }
    }

    #[test]
    fn within_bounds_is_quiet() {
        let p = ThresholdProfile::default_for(PatientCategory::Term);
        assert!(threshold_check(&sample(14_000, 9_700), &p).is_empty());
    }

    #[test]
    fn bounds_are_inclusive() {
        let p = ThresholdProfile::default_for(PatientCategory::Term);
        assert!(threshold_check(&sample(p.get(VitalKind::Hr).low, 9_700), &p).is_empty());
        assert!(threshold_check(&sample(p.get(VitalKind::Hr).high, 9_700), &p).is_empty());
    }

    #[test]
    fn low_spo2_single_event() {
        let p = ThresholdProfile::default_for(PatientCategory::Term);
        let ev = threshold_check(&sample(14_000, 8_000), &p);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].source, ev[0].direction), (EventSource::Spo2, Direction::Low));
    }

    #[test]
    fn parse_round_trip_and_overrides() {
        let set = ThresholdSet::parse("# ward override\n[term]\nhr = 90 170\n\n[very_preterm]\ntemp = 36.2 37.6\n").unwrap();
        assert_eq!(set.get(PatientCategory::Term).get(VitalKind::Hr), Bounds { low: 9_000, high: 17_000 });
        assert_eq!(set.get(PatientCategory::VeryPreterm).get(VitalKind::Temp), Bounds { low: 3_620, high: 3_760 });
        assert_eq!(set.get(PatientCategory::Term).get(VitalKind::Spo2), ThresholdProfile::default_for(PatientCategory::Term).get(VitalKind::Spo2));
        assert_eq!(ThresholdSet::parse(&set.render()).unwrap(), set);
    }

    #[test]
    fn parse_errors() {
        assert!(ThresholdSet::parse("hr = 1 2").is_err());
        assert!(ThresholdSet::parse("[term]\nhr = 180 100").is_err());
        assert!(ThresholdSet::parse("[neonate]").is_err());
        assert!(ThresholdSet::parse("[term]\nhr = 1").is_err());
    }

    #[test]
    fn every_default_profile_is_valid() {
        for c in PatientCategory::ALL {
            ThresholdProfile::default_for(c).validate().unwrap();
        }
    }
}
