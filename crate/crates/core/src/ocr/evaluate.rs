use super::select::Extraction;
use super::{OcrError, OcrVital};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

/// Annotated values per image; `None` marks a vital not shown on screen.
pub type GroundTruth = BTreeMap<String, [Option<u32>; 3]>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VitalMetrics {
    pub tp: u32,
    pub fp: u32,
    pub fn_: u32,
    pub with_truth: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(n: u32, d: u32) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Score predictions against truth. A wrong value counts as one false
/// positive and one false negative. Undefined ratios are reported as 0.
pub fn evaluate(predictions: &[Extraction], truth: &GroundTruth) -> Result<[VitalMetrics; 3], OcrError> {
    let pred_ids: BTreeSet<&str> = predictions.iter().map(|p| p.image_id.as_str()).collect();
    let truth_ids: BTreeSet<&str> = truth.keys().map(String::as_str).collect();
    if pred_ids != truth_ids || pred_ids.len() != predictions.len() {
        let diff: Vec<&str> = pred_ids.symmetric_difference(&truth_ids).copied().take(5).collect();
        return Err(OcrError::IdMismatch(if diff.is_empty() { "duplicate prediction ids".into() } else { diff.join(", ") }));
    }
    let mut out = [VitalMetrics::default(); 3];
    for p in predictions {
        let t = &truth[&p.image_id];
        for v in OcrVital::ALL {
            let m = &mut out[v.index()];
            let want = t[v.index()];
            m.with_truth += want.is_some() as u32;
            match (p.value(v), want) {
                (Some(got), Some(w)) if got == w => m.tp += 1,
                (Some(_), Some(_)) => {
                    m.fp += 1;
                    m.fn_ += 1;
                }
                (Some(_), None) => m.fp += 1,
                (None, Some(_)) => m.fn_ += 1,
                (None, None) => {}
            }
        }
    }
    for m in &mut out {
        m.precision = ratio(m.tp, m.tp + m.fp);
        m.recall = ratio(m.tp, m.tp + m.fn_);
        m.f1 = if m.precision + m.recall > 0.0 { 2.0 * m.precision * m.recall / (m.precision + m.recall) } else { 0.0 };
        m.accuracy = ratio(m.tp, m.with_truth);
    }
    Ok(out)
}

pub fn format_report(metrics: &[VitalMetrics; 3]) -> String {
    let mut s = String::from("vital  precision  recall  f1     accuracy  tp   fp   fn   n\n");
    for v in OcrVital::ALL {
        let m = metrics[v.index()];
        let _ = writeln!(
            s,
            "{:<6} {:<10.3} {:<7.3} {:<6.3} {:<9.3} {:<4} {:<4} {:<4} {}",
            v.label(),
            m.precision,
            m.recall,
            m.f1,
            m.accuracy,
            m.tp,
            m.fp,
            m.fn_,
            m.with_truth
        );
    }
    s
}
