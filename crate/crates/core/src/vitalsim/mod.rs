//! Deterministic simulated wearable: scenario-driven vitals with sensor
//! noise, motion-adaptive sampling, batching, and the current/battery model.

mod device;
mod power;
mod scenario;

pub use device::{run_device, DeviceConfig, SimDevice, StreamStats};
pub use power::{battery_life_h, power_current, PowerMode, CONNECTED_INTERVALS_S};
pub use scenario::{Curve, EventKind, Glitch, NoiseStd, Scenario, ScenarioEvent, DEFAULT_START_MS};

use crate::vitals::{SampleFlags, VitalKind, VitalSample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("t_ms {t_ms} outside scenario window [{start_ms}, {end_ms})")]
    OutOfRange { t_ms: u64, start_ms: u64, end_ms: u64 },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("unsupported update interval {0}s (measured: advertising, 1, 2, 4, 5)")]
    UnsupportedInterval(u8),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("invalid rate tiers: {0}")]
    RateTiers(String),
    #[error(transparent)]
    Transport(#[from] crate::transport::TransportError),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_rng(seed: u64, device_id: u64, t_ms: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(splitmix64(seed) ^ device_id) ^ t_ms);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Generate the reading of `device_id` at epoch time `t_ms`.
///
/// Baseline curve plus active event offsets plus seeded Gaussian noise,
/// rounded to centi-units and clamped. The noise stream depends only on
/// `(scenario.seed, device_id, t_ms)`.
pub fn generate_sample(scenario: &Scenario, device_id: u64, t_ms: u64) -> Result<VitalSample, SimError> {
    if t_ms < scenario.start_ms || t_ms >= scenario.end_ms() {
        return Err(SimError::OutOfRange { t_ms, start_ms: scenario.start_ms, end_ms: scenario.end_ms() });
    }
    let t_s = (t_ms - scenario.start_ms) as f64 / 1000.0;
    let mut rng = sample_rng(scenario.seed, device_id, t_ms);
    let mut flags = SampleFlags::default();
    let mut values = [0u16; 4];
    for kind in VitalKind::ALL {
        let mut v = scenario.baseline(kind).at(t_s);
        for e in scenario.events.iter().filter(|e| e.kind.vital() == kind && e.active_at(t_s)) {
            v += e.magnitude;
            flags = flags.with(SampleFlags::SYNTHETIC_EVENT);
        }
        for g in scenario.glitches.iter().filter(|g| g.vital == kind && g.active_at(t_s)) {
            v += g.magnitude;
        }
        let std = scenario.noise.get(kind);
        if std > 0.0 {
            // std is validated finite and positive here
            v += Normal::new(0.0, std).expect("valid std").sample(&mut rng);
        }
        values[kind.index()] = kind.to_centi(v);
    }
    let motion = scenario.motion.at(t_s).round().clamp(0.0, 255.0) as u8;
    Ok(VitalSample {
        device_id,
        t_ms,
        hr: values[0],
        spo2: values[1],
        rr: values[2],
        temp: values[3],
        motion,
        flags,
    })
}

/// Motion-to-sampling-rate tiers. Boundaries belong to the upper tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateTiers {
    pub mid_threshold: u8,
    pub high_threshold: u8,
    pub low_hz: u32,
    pub mid_hz: u32,
    pub high_hz: u32,
}

impl Default for RateTiers {
    fn default() -> Self {
        RateTiers { mid_threshold: 64, high_threshold: 192, low_hz: 1, mid_hz: 4, high_hz: 10 }
    }
}

impl RateTiers {
    pub fn new(mid_threshold: u8, high_threshold: u8, low_hz: u32, mid_hz: u32, high_hz: u32) -> Result<Self, SimError> {
        let t = RateTiers { mid_threshold, high_threshold, low_hz, mid_hz, high_hz };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.mid_threshold > self.high_threshold {
            return Err(SimError::RateTiers("mid threshold above high threshold".into()));
        }
        if self.low_hz == 0 || self.low_hz > self.mid_hz || self.mid_hz > self.high_hz {
            return Err(SimError::RateTiers("rates must satisfy 0 < low <= mid <= high".into()));
        }
        if self.high_hz > 1000 {
            return Err(SimError::RateTiers("rates above 1 kHz are not representable in ms".into()));
        }
        Ok(())
    }
}

/// Samples per second for a motion level.
pub fn adaptive_rate(motion: u8, tiers: &RateTiers) -> u32 {
    if motion >= tiers.high_threshold {
        tiers.high_hz
    } else if motion >= tiers.mid_threshold {
        tiers.mid_hz
    } else {
        tiers.low_hz
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_noise() -> Scenario {
        let mut s = Scenario::stable(600, 1);
        s.noise = NoiseStd::ZERO;
        s
    }

    #[test]
    fn zero_noise_passthrough() {
        let s = zero_noise();
        let v = generate_sample(&s, 7, s.start_ms + 5_000).unwrap();
        assert_eq!(v.hr, 14_000);
        assert_eq!(v.spo2, 9_700);
        assert!(!v.flags.event());
    }

    #[test]
    fn additive_desaturation_event() {
        let mut s = zero_noise();
        s.events.push(ScenarioEvent { kind: EventKind::Desaturation, onset_s: 10.0, duration_s: 20.0, magnitude: -10.0 });
        let v = generate_sample(&s, 7, s.start_ms + 15_000).unwrap();
        assert_eq!(v.spo2, 8_700);
        assert!(v.flags.event());
        let after = generate_sample(&s, 7, s.start_ms + 30_000).unwrap();
        assert_eq!(after.spo2, 9_700);
    }

    #[test]
    fn out_of_range_rejected() {
        let s = zero_noise();
        assert!(matches!(generate_sample(&s, 1, s.start_ms - 1), Err(SimError::OutOfRange { .. })));
        assert!(matches!(generate_sample(&s, 1, s.end_ms()), Err(SimError::OutOfRange { .. })));
    }

    #[test]
    fn hr_noise_std_matches_configuration() {
        // Sample-statistics oracle over 1e5 readings at seed 42.
        let mut s = Scenario::stable(100_000, 42);
        s.noise = NoiseStd { hr: 2.04, ..NoiseStd::ZERO };
        let n = 100_000u64;
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        for i in 0..n {
            let hr = generate_sample(&s, 3, s.start_ms + i * 1000).unwrap().hr as f64 / 100.0;
            sum += hr;
            sum_sq += hr * hr;
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!((1.94..=2.14).contains(&std), "empirical std {std}");
    }

    #[test]
    fn identical_inputs_identical_samples() {
        let s = Scenario::builtin("glitchy", 600, 99).unwrap();
        for t in (0..600).map(|i| s.start_ms + i * 1000) {
            assert_eq!(generate_sample(&s, 4, t).unwrap(), generate_sample(&s, 4, t).unwrap());
        }
        let other = generate_sample(&s, 5, s.start_ms).unwrap();
        let this = generate_sample(&s, 4, s.start_ms).unwrap();
        assert_ne!((other.hr, other.spo2, other.rr), (this.hr, this.spo2, this.rr));
    }

    #[test]
    fn adaptive_rate_tiers() {
        let t = RateTiers::default();
        assert_eq!(adaptive_rate(0, &t), 1);
        assert_eq!(adaptive_rate(63, &t), 1);
        assert_eq!(adaptive_rate(64, &t), 4);
        assert_eq!(adaptive_rate(191, &t), 4);
        assert_eq!(adaptive_rate(200, &t), 10);
        assert!(RateTiers::new(100, 50, 1, 2, 3).is_err());
        assert!(RateTiers::new(10, 50, 5, 2, 3).is_err());
    }

    proptest! {
        #[test]
        fn adaptive_rate_monotone(a in 0u8..=255, b in 0u8..=255, m in 0u8..=255, h in 0u8..=255,
                                  lo in 1u32..20, dm in 0u32..20, dh in 0u32..20) {
            let (m, h) = (m.min(h), m.max(h));
            let tiers = RateTiers::new(m, h, lo, lo + dm, lo + dm + dh).unwrap();
            let (x, y) = (a.min(b), a.max(b));
            prop_assert!(adaptive_rate(x, &tiers) <= adaptive_rate(y, &tiers));
        }

        #[test]
        fn samples_respect_clamps(seed in any::<u64>(), dev in any::<u64>(), t in 0u64..600) {
            let mut s = Scenario::builtin("glitchy", 600, seed).unwrap();
            s.noise = NoiseStd { hr: 80.0, spo2: 30.0, rr: 40.0, temp: 5.0 };
            let v = generate_sample(&s, dev, s.start_ms + t * 1000).unwrap();
            prop_assert!(v.is_within_ranges());
        }
    }
}
