use super::anchors::{find_anchors, Lexicon};
use super::{OcrError, OcrVital, Rect, TextBox};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcrConfig {
    pub fx: f64,
    pub fy: f64,
    /// Inclusive plausible value range per vital (HR, SpO2, RR).
    pub ranges: [(u32, u32); 3],
}

impl Default for OcrConfig {
    fn default() -> Self {
        OcrConfig { fx: 4.0, fy: 1.5, ranges: [(40, 250), (50, 100), (5, 120)] }
    }
}

impl OcrConfig {
    pub fn validate(&self) -> Result<(), OcrError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(OcrError::Config("expansion factors must be positive".into()));
        }
        if self.ranges.iter().any(|(lo, hi)| lo > hi) {
            return Err(OcrError::Config("range low exceeds high".into()));
        }
        Ok(())
    }

    pub fn range(&self, v: OcrVital) -> (u32, u32) {
        self.ranges[v.index()]
    }
}

/// Search rectangle around an anchor, clipped to `[0, W] x [0, H]` when the
/// image size is known and to the non-negative quadrant otherwise.
pub fn expand_region(anchor: &TextBox, fx: f64, fy: f64, image: Option<(f64, f64)>) -> Rect {
    let (w_max, h_max) = image.unwrap_or((f64::INFINITY, f64::INFINITY));
    Rect {
        x0: (anchor.x - fx * anchor.w).clamp(0.0, w_max),
        y0: (anchor.y - fy * anchor.h).clamp(0.0, h_max),
        x1: (anchor.x + (1.0 + fx) * anchor.w).clamp(0.0, w_max),
        y1: (anchor.y + (1.0 + fy) * anchor.h).clamp(0.0, h_max),
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Largest in-range integer box with its center inside `region`; ties go to
/// the center nearest the anchor, then to the earlier box.
pub fn select_value<'a>(region: &Rect, boxes: &'a [TextBox], range: (u32, u32), anchor: &TextBox) -> Option<&'a TextBox> {
    select_with_region(region, boxes, range, anchor).map(|(b, _)| b)
}

pub fn select_with_region<'a>(
    region: &Rect,
    boxes: &'a [TextBox],
    (lo, hi): (u32, u32),
    anchor: &TextBox,
) -> Option<(&'a TextBox, u32)> {
    let ac = anchor.center();
    boxes
        .iter()
        .filter(|b| region.contains(b.center()))
        .filter_map(|b| b.integer_value().filter(|v| (lo..=hi).contains(v)).map(|v| (b, v)))
        .min_by(|(a, _), (b, _)| {
            b.area()
                .partial_cmp(&a.area())
                .unwrap_or(Ordering::Equal)
                .then(dist2(a.center(), ac).partial_cmp(&dist2(b.center(), ac)).unwrap_or(Ordering::Equal))
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extracted {
    pub value: u32,
    pub source: TextBox,
    pub anchor: TextBox,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub image_id: String,
    pub hr: Option<Extracted>,
    pub spo2: Option<Extracted>,
    pub rr: Option<Extracted>,
}

impl Extraction {
    pub fn get(&self, v: OcrVital) -> Option<&Extracted> {
        match v {
            OcrVital::Hr => self.hr.as_ref(),
            OcrVital::Spo2 => self.spo2.as_ref(),
            OcrVital::Rr => self.rr.as_ref(),
        }
    }

    pub fn value(&self, v: OcrVital) -> Option<u32> {
        self.get(v).map(|e| e.value)
    }

    fn slot(&mut self, v: OcrVital) -> &mut Option<Extracted> {
        match v {
            OcrVital::Hr => &mut self.hr,
            OcrVital::Spo2 => &mut self.spo2,
            OcrVital::Rr => &mut self.rr,
        }
    }
}

pub fn extract(
    image_id: &str,
    boxes: &[TextBox],
    image: Option<(f64, f64)>,
    lexicon: &Lexicon,
    config: &OcrConfig,
) -> Extraction {
    let mut out = Extraction { image_id: image_id.to_string(), ..Default::default() };
    let anchors = find_anchors(boxes, lexicon);
    for v in OcrVital::ALL {
        let Some(anchor) = anchors[v.index()] else { continue };
        let region = expand_region(anchor, config.fx, config.fy, image);
        if let Some((b, value)) = select_with_region(&region, boxes, config.range(v), anchor) {
            *out.slot(v) = Some(Extracted { value, source: b.clone(), anchor: anchor.clone() });
        }
    }
    out
}
