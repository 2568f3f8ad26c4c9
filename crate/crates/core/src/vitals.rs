//! Fixed-point vital-sign samples.
//!
//! Every vital is carried as an integer in hundredths of its natural unit
//! (centi-bpm, centi-percent, centi-breaths/min, centi-degC). This keeps
//! delta encoding exact and golden vectors free of float drift.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const HR_MAX: u16 = 30_000;
pub const SPO2_MAX: u16 = 10_000;
pub const RR_MAX: u16 = 20_000;
pub const TEMP_MIN: u16 = 2_000;
pub const TEMP_MAX: u16 = 4_500;

/// Size of [`VitalSample::to_bytes`] output.
pub const SAMPLE_BYTES: usize = 26;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleFlags(pub u8);

impl SampleFlags {
    pub const SENSOR_DEGRADED: u8 = 0b01;
    pub const SYNTHETIC_EVENT: u8 = 0b10;

    pub fn degraded(self) -> bool {
        self.0 & Self::SENSOR_DEGRADED != 0
    }

    pub fn event(self) -> bool {
        self.0 & Self::SYNTHETIC_EVENT != 0
    }

    pub fn with(self, bit: u8) -> Self {
        SampleFlags(self.0 | bit)
    }
}

/// The four continuously monitored vitals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VitalKind {
    Hr,
    Spo2,
    Rr,
    Temp,
}

impl VitalKind {
    pub const ALL: [VitalKind; 4] = [VitalKind::Hr, VitalKind::Spo2, VitalKind::Rr, VitalKind::Temp];

    pub fn index(self) -> usize {
        match self {
            VitalKind::Hr => 0,
            VitalKind::Spo2 => 1,
            VitalKind::Rr => 2,
            VitalKind::Temp => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VitalKind::Hr => "hr",
            VitalKind::Spo2 => "spo2",
            VitalKind::Rr => "rr",
            VitalKind::Temp => "temp",
        }
    }

    /// Inclusive clamp range in centi-units.
    pub fn range(self) -> (u16, u16) {
        match self {
            VitalKind::Hr => (0, HR_MAX),
            VitalKind::Spo2 => (0, SPO2_MAX),
            VitalKind::Rr => (0, RR_MAX),
            VitalKind::Temp => (TEMP_MIN, TEMP_MAX),
        }
    }

    /// Round a natural-unit value to centi-units and clamp it into range.
    pub fn to_centi(self, value: f64) -> u16 {
        let (lo, hi) = self.range();
        let c = (value * 100.0).round();
        if c.is_nan() {
            return lo;
        }
        c.clamp(lo as f64, hi as f64) as u16
    }
}

impl fmt::Display for VitalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VitalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hr" => Ok(VitalKind::Hr),
            "spo2" => Ok(VitalKind::Spo2),
            "rr" => Ok(VitalKind::Rr),
            "temp" => Ok(VitalKind::Temp),
            other => Err(format!("unknown vital '{other}'")),
        }
    }
}

/// One timestamped multimodal reading from one device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VitalSample {
    pub device_id: u64,
    pub t_ms: u64,
    pub hr: u16,
    pub spo2: u16,
    pub rr: u16,
    pub temp: u16,
    pub motion: u8,
    pub flags: SampleFlags,
}

impl VitalSample {
    pub fn get(&self, kind: VitalKind) -> u16 {
        match kind {
            VitalKind::Hr => self.hr,
            VitalKind::Spo2 => self.spo2,
            VitalKind::Rr => self.rr,
            VitalKind::Temp => self.temp,
        }
    }

    pub fn set(&mut self, kind: VitalKind, value: u16) {
        match kind {
            VitalKind::Hr => self.hr = value,
            VitalKind::Spo2 => self.spo2 = value,
            VitalKind::Rr => self.rr = value,
            VitalKind::Temp => self.temp = value,
        }
    }

    /// Clamp every vital into its valid range.
    pub fn clamped(mut self) -> Self {
        for kind in VitalKind::ALL {
            let (lo, hi) = kind.range();
            self.set(kind, self.get(kind).clamp(lo, hi));
        }
        self
    }

    pub fn is_within_ranges(&self) -> bool {
        VitalKind::ALL.iter().all(|&k| {
            let (lo, hi) = k.range();
            (lo..=hi).contains(&self.get(k))
        })
    }

    /// Fixed little-endian record layout used for stored vital records.
    pub fn to_bytes(&self) -> [u8; SAMPLE_BYTES] {
        let mut out = [0u8; SAMPLE_BYTES];
        out[0..8].copy_from_slice(&self.device_id.to_le_bytes());
        out[8..16].copy_from_slice(&self.t_ms.to_le_bytes());
        out[16..18].copy_from_slice(&self.hr.to_le_bytes());
        out[18..20].copy_from_slice(&self.spo2.to_le_bytes());
        out[20..22].copy_from_slice(&self.rr.to_le_bytes());
        out[22..24].copy_from_slice(&self.temp.to_le_bytes());
        out[24] = self.motion;
        out[25] = self.flags.0;
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != SAMPLE_BYTES {
            return None;
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        Some(VitalSample {
            device_id: u64::from_le_bytes(bytes[0..8].try_into().ok()?),
            t_ms: u64::from_le_bytes(bytes[8..16].try_into().ok()?),
            hr: u16_at(16),
            spo2: u16_at(18),
            rr: u16_at(20),
            temp: u16_at(22),
            motion: bytes[24],
            flags: SampleFlags(bytes[25]),
        })
    }
}
