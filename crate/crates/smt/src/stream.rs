//! Per-device sliding-window inference on a live sample feed.
//!
//! Samples are bucketed by whole second; the first reading of a second is
//! used and later ones in the same second are ignored. Seconds without a
//! usable reading (missing, or flagged as degraded by the sensor) repeat the
//! last value. Once a window holds a value older than [`MAX_FILL_S`] the
//! step is reported as degraded instead of scored. Nothing is emitted until
//! a full window has been buffered.

use crate::dataset::Sample;
use crate::model::Model;
use crate::params::MODALITIES;
use crate::{RiskScore, SmtError};
use neoward_core::{VitalKind, VitalSample};
use serde::Serialize;
use std::collections::VecDeque;
use std::sync::Arc;

pub const MAX_FILL_S: u64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StreamOutput {
    Score { t_s: u64, score: RiskScore },
    Degraded { t_s: u64, stale_s: u64 },
}

impl StreamOutput {
    pub fn t_s(&self) -> u64 {
        match self {
            StreamOutput::Score { t_s, .. } | StreamOutput::Degraded { t_s, .. } => *t_s,
        }
    }

    pub fn score(&self) -> Option<RiskScore> {
        match self {
            StreamOutput::Score { score, .. } => Some(*score),
            StreamOutput::Degraded { .. } => None,
        }
    }
}

struct Slot {
    values: [f64; MODALITIES],
    /// Seconds since the last real reading; 0 for a real reading.
    stale: u64,
}

pub struct StreamInferer {
    model: Arc<Model>,
    static_f: Option<Vec<f64>>,
    semi: Option<Vec<f64>>,
    buf: VecDeque<Slot>,
    last_second: Option<u64>,
    last_real: Option<[f64; MODALITIES]>,
}

impl StreamInferer {
    pub fn new(model: Arc<Model>) -> Self {
        StreamInferer { model, static_f: None, semi: None, buf: VecDeque::new(), last_second: None, last_real: None }
    }

    pub fn set_features(&mut self, static_f: Option<Vec<f64>>, semi: Option<Vec<f64>>) {
        self.static_f = static_f;
        self.semi = semi;
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn reset(&mut self) {
        self.buf.clear();
        self.last_second = None;
        self.last_real = None;
    }

    /// Feed one reading. Returns one output per second advanced once warm.
    pub fn push(&mut self, s: &VitalSample) -> Result<Vec<StreamOutput>, SmtError> {
        let sec = s.t_ms / 1000;
        let n = self.model.dims().window;
        let reading = (!s.flags.degraded()).then(|| VitalKind::ALL.map(|k| s.get(k) as f64 / 100.0));
        let mut out = Vec::new();
        match self.last_second {
            Some(last) if sec <= last => return Ok(out),
            Some(last) if sec - last > n as u64 => self.reset(),
            Some(last) => {
                for gap in last + 1..sec {
                    self.advance(None);
                    if let Some(o) = self.emit(gap, n)? {
                        out.push(o);
                    }
                }
            }
            None => {}
        }
        if self.last_real.is_none() && reading.is_none() {
            // nothing to fill from yet
            return Ok(out);
        }
        self.advance(reading);
        self.last_second = Some(sec);
        if let Some(o) = self.emit(sec, n)? {
            out.push(o);
        }
        Ok(out)
    }

    fn advance(&mut self, reading: Option<[f64; MODALITIES]>) {
        let slot = match (reading, self.last_real, self.buf.back()) {
            (Some(v), _, _) => {
                self.last_real = Some(v);
                Slot { values: v, stale: 0 }
            }
            (None, Some(v), Some(prev)) => Slot { values: v, stale: prev.stale + 1 },
            (None, Some(v), None) => Slot { values: v, stale: 1 },
            (None, None, _) => return,
        };
        self.buf.push_back(slot);
        while self.buf.len() > self.model.dims().window {
            self.buf.pop_front();
        }
    }

    fn emit(&self, t_s: u64, n: usize) -> Result<Option<StreamOutput>, SmtError> {
        if self.buf.len() < n {
            return Ok(None);
        }
        let stale_s = self.buf.iter().map(|s| s.stale).max().unwrap_or(0);
        if stale_s > MAX_FILL_S {
            return Ok(Some(StreamOutput::Degraded { t_s, stale_s }));
        }
        let sample = Sample {
            window: self.buf.iter().flat_map(|s| s.values).collect(),
            static_f: self.static_f.clone(),
            semi: self.semi.clone(),
            label: crate::RiskClass::Low,
            source: String::new(),
        };
        Ok(Some(StreamOutput::Score { t_s, score: self.model.predict(&sample)? }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Normalizer;
    use crate::params::{Dims, Params};
    use neoward_core::SampleFlags;

    fn model(window: usize) -> Arc<Model> {
        let dims = Dims { window, d: 8, heads: 2, freqs: 4, ..Dims::default() };
        let mut norm = Normalizer::identity(&dims);
        norm.mean[..4].copy_from_slice(&[140.0, 97.0, 45.0, 36.8]);
        norm.std[..4].copy_from_slice(&[10.0, 3.0, 10.0, 0.5]);
        Arc::new(Model::new(Params::init(dims, 4), 1.0, norm).unwrap())
    }

    fn sample(t_s: u64, spo2: u16) -> VitalSample {
        VitalSample { device_id: 1, t_ms: t_s * 1000 + 250, hr: 14000, spo2, rr: 4500, temp: 3680, motion: 0, flags: SampleFlags::default() }
    }

    #[test]
    fn cold_start_then_one_score_per_second() {
        let mut s = StreamInferer::new(model(300));
        for t in 0..299 {
            assert!(s.push(&sample(t, 9700)).unwrap().is_empty());
        }
        let out = s.push(&sample(299, 9700)).unwrap();
        assert_eq!(out.len(), 1);
        let first = out[0].score().unwrap();
        assert!(first.is_simplex(1e-9));
        for t in 300..310 {
            let o = s.push(&sample(t, 9700)).unwrap();
            assert_eq!(o.len(), 1);
            assert_eq!(o[0].score().unwrap(), first);
        }
        // duplicates within a second are ignored
        assert!(s.push(&sample(309, 8000)).unwrap().is_empty());
    }

    #[test]
    fn gaps_fill_then_degrade() {
        let mut s = StreamInferer::new(model(16));
        for t in 0..16 {
            s.push(&sample(t, 9700)).unwrap();
        }
        // 10 missing seconds are filled and still scored
        let out = s.push(&sample(26, 9700)).unwrap();
        assert_eq!(out.len(), 11);
        assert!(out.iter().all(|o| o.score().is_some()));
        // an 11th missing second degrades until it leaves the window
        let out = s.push(&sample(38, 9700)).unwrap();
        assert_eq!(out.len(), 12);
        assert!(matches!(out[10], StreamOutput::Degraded { stale_s: 11, .. }));
        assert!(matches!(out[11], StreamOutput::Degraded { .. }));
        let mut t = 39;
        loop {
            let o = s.push(&sample(t, 9700)).unwrap();
            if o[0].score().is_some() {
                break;
            }
            t += 1;
        }
        assert_eq!(t, 37 + 16);
        // sensor-degraded readings count as gaps
        let mut bad = sample(t + 1, 9700);
        bad.flags = bad.flags.with(SampleFlags::SENSOR_DEGRADED);
        assert!(s.push(&bad).unwrap()[0].score().is_some());
        // a gap longer than the window starts over
        assert!(s.push(&sample(t + 100, 9700)).unwrap().is_empty());
        assert_eq!(s.buffered(), 1);
    }
}
