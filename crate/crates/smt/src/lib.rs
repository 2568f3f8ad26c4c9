//! Streaming multimodal transformer for neonatal risk stratification.
//!
//! A 1 Hz window of HR, SpO2, RR and temperature goes through a 3 x 3
//! convolution over the time x modality grid, one block of log-strided
//! sparse multi-head attention with a learned sinusoidal relative bias,
//! attention pooling, and a second attention step that mixes in static and
//! semi-static patient features. A temperature-scaled softmax head gives
//! low / moderate / high probabilities.
//!
//! Everything is plain `f64` with a hand-written backward pass; see
//! [`gradcheck`] for the finite-difference verification.

pub mod calibrate;
pub mod dataset;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod modelfile;
pub mod ops;
pub mod params;
pub mod pattern;
pub mod scaling;
pub mod stream;
pub mod train;

pub use dataset::{Normalizer, Sample};
pub use model::Model;
pub use params::{Dims, Params};
pub use pattern::Pattern;
pub use stream::{StreamInferer, StreamOutput};
pub use train::{train, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmtError {
    #[error("config: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskClass {
    Low,
    Moderate,
    High,
}

impl RiskClass {
    pub const ALL: [RiskClass; 3] = [RiskClass::Low, RiskClass::Moderate, RiskClass::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskClass::Low => "low",
            RiskClass::Moderate => "moderate",
            RiskClass::High => "high",
        }
    }
}

impl fmt::Display for RiskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown risk class '{s}'"))
    }
}

/// Probability triple over [`RiskClass`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub p_low: f64,
    pub p_moderate: f64,
    pub p_high: f64,
}

impl RiskScore {
    pub fn from_probs(p: [f64; 3]) -> Self {
        RiskScore { p_low: p[0], p_moderate: p[1], p_high: p[2] }
    }

    pub fn probs(&self) -> [f64; 3] {
        [self.p_low, self.p_moderate, self.p_high]
    }

    /// Most likely class; ties go to the lower-risk class.
    pub fn class(&self) -> RiskClass {
        let p = self.probs();
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        RiskClass::ALL[best]
    }

    pub fn is_simplex(&self, tol: f64) -> bool {
        let p = self.probs();
        p.iter().all(|v| (0.0..=1.0).contains(v)) && (p.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}
