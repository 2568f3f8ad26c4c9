//! Vital-sign value extraction from monitor text detections.
//!
//! The input is detector output (boxes with strings), not pixels. Labels
//! such as "HR" anchor a search region; the largest plausible integer in
//! that region is taken as the displayed value.

mod anchors;
mod evaluate;
mod files;
mod select;
pub mod synth;

pub use anchors::{find_anchors, Lexicon};
pub use evaluate::{evaluate, format_report, GroundTruth, VitalMetrics};
pub use files::{
    batch_extract, parse_detections, parse_truth, render_detections, render_truth, BatchEntry, Detections,
    DETECTION_EXT,
};
pub use select::{expand_region, extract, select_value, select_with_region, Extracted, Extraction, OcrConfig};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OcrError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("image ids differ between predictions and ground truth: {0}")]
    IdMismatch(String),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// The vitals read off monitor screens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcrVital {
    Hr,
    Spo2,
    Rr,
}

impl OcrVital {
    pub const ALL: [OcrVital; 3] = [OcrVital::Hr, OcrVital::Spo2, OcrVital::Rr];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            OcrVital::Hr => "HR",
            OcrVital::Spo2 => "SpO2",
            OcrVital::Rr => "RR",
        }
    }
}

impl fmt::Display for OcrVital {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OcrVital::Hr => "hr",
            OcrVital::Spo2 => "spo2",
            OcrVital::Rr => "rr",
        })
    }
}

impl FromStr for OcrVital {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hr" => Ok(OcrVital::Hr),
            "spo2" => Ok(OcrVital::Spo2),
            "rr" => Ok(OcrVital::Rr),
            other => Err(format!("unknown vital '{other}'")),
        }
    }
}

/// One detected text region. Coordinates in pixels, origin top-left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextBox {
    pub text: String,
    pub confidence: f64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl TextBox {
    pub fn new(text: impl Into<String>, confidence: f64, x: f64, y: f64, w: f64, h: f64) -> Result<Self, OcrError> {
        let b = TextBox { text: text.into(), confidence, x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), OcrError> {
        if !(self.w > 0.0 && self.h > 0.0) || !self.x.is_finite() || !self.y.is_finite() {
            return Err(OcrError::InvalidBox(format!("'{}' needs finite position and w, h > 0", self.text)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(OcrError::InvalidBox(format!("'{}' confidence {} outside [0, 1]", self.text, self.confidence)));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Integer reading of the text. Decimals are truncated.
    pub fn integer_value(&self) -> Option<u32> {
        let t = self.text.trim();
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
        if int.is_empty() || !digits(int) || !digits(frac) || (t.contains('.') && frac.is_empty()) || int.len() > 9 {
            return None;
        }
        int.parse().ok()
    }
}

/// Axis-aligned rectangle, `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.x0 >= self.x0 && o.x1 <= self.x1 && o.y0 >= self.y0 && o.y1 <= self.y1
    }
}
