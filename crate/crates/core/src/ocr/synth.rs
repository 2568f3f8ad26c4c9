//! Generated monitor layouts with known values.
//!
//! Each of HR, SpO2 and RR gets its own horizontal panel: a small label and
//! a large value placed below and to the right of it. The distractor variant
//! adds small alarm-limit numbers, unit strings and a scale marker around
//! each value, and occasionally shows a reading outside the plausible range
//! (bradycardia, apnea) so the extractor has to miss it.

use super::files::Detections;
use super::{OcrVital, TextBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WIDTH: f64 = 1280.0;
pub const HEIGHT: f64 = 720.0;
const ROW: f64 = 240.0;
const CHAR_W: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayoutKind {
    Clean,
    Distractors,
}

fn text_box(rng: &mut ChaCha8Rng, text: String, x: f64, y: f64, h: f64) -> TextBox {
    let w = (text.chars().count() as f64 * CHAR_W * h).round().max(1.0);
    TextBox { text, confidence: (rng.random_range(0.80..0.99f64) * 100.0).round() / 100.0, x: x.round(), y: y.round(), w, h: h.round() }
}

fn shown_value(rng: &mut ChaCha8Rng, v: OcrVital, kind: LayoutKind) -> u32 {
    let implausible = kind == LayoutKind::Distractors && rng.random_bool(0.03);
    match (v, implausible) {
        (OcrVital::Hr, false) => rng.random_range(90..=200),
        (OcrVital::Hr, true) => rng.random_range(25..=39),
        (OcrVital::Spo2, false) => rng.random_range(80..=100),
        (OcrVital::Spo2, true) => rng.random_range(30..=49),
        (OcrVital::Rr, false) => rng.random_range(25..=80),
        (OcrVital::Rr, true) => rng.random_range(0..=4),
    }
}

fn limits(rng: &mut ChaCha8Rng, v: OcrVital) -> (u32, u32) {
    match v {
        OcrVital::Hr => (rng.random_range(80..=100), rng.random_range(160..=200)),
        OcrVital::Spo2 => (rng.random_range(85..=90), 100),
        OcrVital::Rr => (rng.random_range(20..=30), rng.random_range(60..=80)),
    }
}

fn label(rng: &mut ChaCha8Rng, v: OcrVital) -> &'static str {
    let opts: &[&str] = match v {
        OcrVital::Hr => &["HR", "ECG", "PR"],
        OcrVital::Spo2 => &["SpO2", "SPO2", "%SpO2"],
        OcrVital::Rr => &["RR", "RESP", "Resp"],
    };
    opts[rng.random_range(0..opts.len())]
}

/// One layout and its truth values.
pub fn layout(seed: u64, kind: LayoutKind) -> (Detections, [Option<u32>; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f63_7221);
    let mut boxes = Vec::new();
    let mut truth = [None; 3];
    for v in OcrVital::ALL {
        let top = v.index() as f64 * ROW;
        let h_a = rng.random_range(18.0..28.0);
        let text = label(&mut rng, v).to_string();
        let (x_a, y_a) = (rng.random_range(640.0..900.0), top + rng.random_range(30.0..70.0));
        let a = text_box(&mut rng, text, x_a, y_a, h_a);
        let value = shown_value(&mut rng, v, kind);
        truth[v.index()] = Some(value);
        let h_v = rng.random_range(50.0..90.0);
        let w_v = value.to_string().len() as f64 * CHAR_W * h_v;
        let cx = a.x + a.w * rng.random_range(1.0..4.0);
        let cy = a.y + a.h * rng.random_range(0.5..2.3);
        let val = text_box(&mut rng, value.to_string(), cx - w_v / 2.0, cy - h_v / 2.0, h_v);
        if kind == LayoutKind::Distractors {
            let (lo, hi) = limits(&mut rng, v);
            let h_l = rng.random_range(10.0..16.0);
            let lx = a.x + a.w * rng.random_range(0.0..3.5);
            boxes.push(text_box(&mut rng, hi.to_string(), lx, a.y - h_l * 0.5, h_l));
            boxes.push(text_box(&mut rng, lo.to_string(), lx, a.y + a.h * 2.0, h_l));
            let unit = match v {
                OcrVital::Hr => "bpm",
                OcrVital::Spo2 => "%",
                OcrVital::Rr => "/min",
            };
            boxes.push(text_box(&mut rng, unit.to_string(), a.x - a.w * 1.5, a.y + a.h * 1.2, h_l));
            boxes.push(text_box(&mut rng, "1.0".to_string(), a.x - a.w * 3.0, a.y, h_l));
        }
        boxes.push(a);
        boxes.push(val);
    }
    // Detector output order is arbitrary.
    for i in (1..boxes.len()).rev() {
        boxes.swap(i, rng.random_range(0..=i));
    }
    (Detections { image_size: Some((WIDTH, HEIGHT)), boxes }, truth)
}

/// `n` layouts with ids `img0000`, `img0001`, ...
pub fn corpus(n: usize, kind: LayoutKind, seed: u64) -> Vec<(String, Detections, [Option<u32>; 3])> {
    (0..n)
        .map(|i| {
            let (d, t) = layout(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), kind);
            (format!("img{i:04}"), d, t)
        })
        .collect()
}
