//! Connection interval selection and reconnect backoff.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TransportError;

pub const CRITICAL_INTERVAL_MS: f64 = 7.5;
pub const STANDARD_MIN_INTERVAL_MS: f64 = 50.0;
pub const STANDARD_MAX_INTERVAL_MS: f64 = 400.0;
pub const RSSI_STRONG_DBM: f64 = -60.0;
pub const RSSI_WEAK_DBM: f64 = -90.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Priority {
    Critical,
    Standard,
}

/// Connection interval for a link. Critical traffic always gets the
/// minimum interval; standard traffic maps RSSI linearly from 50 ms
/// (>= -60 dBm) to 400 ms (<= -90 dBm). RSSI is clamped to [-100, -40].
pub fn connection_interval_ms(priority: Priority, rssi_dbm: f64) -> f64 {
    match priority {
        Priority::Critical => CRITICAL_INTERVAL_MS,
        Priority::Standard => {
            let rssi = if rssi_dbm.is_nan() { -100.0 } else { rssi_dbm.clamp(-100.0, -40.0) };
            if rssi >= RSSI_STRONG_DBM {
                STANDARD_MIN_INTERVAL_MS
            } else if rssi <= RSSI_WEAK_DBM {
                STANDARD_MAX_INTERVAL_MS
            } else {
                let frac = (RSSI_STRONG_DBM - rssi) / (RSSI_STRONG_DBM - RSSI_WEAK_DBM);
                STANDARD_MIN_INTERVAL_MS + frac * (STANDARD_MAX_INTERVAL_MS - STANDARD_MIN_INTERVAL_MS)
            }
        }
    }
}

/// Per-device reconnect policy with its own seeded jitter source.
#[derive(Clone, Debug)]
pub struct ConnectionProfile {
    pub device_id: u64,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub jitter: f64,
    pub last_good_interval_ms: f64,
    rng: ChaCha8Rng,
}

impl ConnectionProfile {
    pub fn new(device_id: u64, backoff_base_ms: u64, backoff_cap_ms: u64, jitter: f64, seed: u64) -> Result<Self, TransportError> {
        if backoff_base_ms > backoff_cap_ms {
            return Err(TransportError::Profile("backoff base exceeds cap".into()));
        }
        if !(0.0..=1.0).contains(&jitter) {
            return Err(TransportError::Profile("jitter must lie in [0, 1]".into()));
        }
        Ok(ConnectionProfile {
            device_id,
            backoff_base_ms,
            backoff_cap_ms,
            jitter,
            last_good_interval_ms: STANDARD_MIN_INTERVAL_MS,
            rng: ChaCha8Rng::seed_from_u64(seed ^ device_id),
        })
    }

    /// Defaults: base 100 ms, cap 30 s, no jitter.
    pub fn with_defaults(device_id: u64) -> Self {
        Self::new(device_id, 100, 30_000, 0.0, 0).expect("defaults are valid")
    }

    /// `min(base * 2^attempt, cap) * (1 + jitter * u)`, `u` uniform in [-0.5, 0.5].
    pub fn next_backoff_ms(&mut self, attempt: u32) -> u64 {
        let exp = if attempt >= 63 {
            u64::MAX
        } else {
            self.backoff_base_ms.saturating_mul(1u64 << attempt)
        };
        let capped = exp.min(self.backoff_cap_ms) as f64;
        if self.jitter == 0.0 {
            return capped as u64;
        }
        let u: f64 = self.rng.random_range(-0.5..=0.5);
        (capped * (1.0 + self.jitter * u)).round() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_examples() {
        assert_eq!(connection_interval_ms(Priority::Critical, -95.0), 7.5);
        assert_eq!(connection_interval_ms(Priority::Standard, -90.0), 400.0);
        assert_eq!(connection_interval_ms(Priority::Standard, -75.0), 225.0);
        assert_eq!(connection_interval_ms(Priority::Standard, -40.0), 50.0);
        assert_eq!(connection_interval_ms(Priority::Standard, -200.0), 400.0);
    }

    #[test]
    fn backoff_examples() {
        let mut p = ConnectionProfile::with_defaults(1);
        assert_eq!(p.next_backoff_ms(0), 100);
        assert_eq!(p.next_backoff_ms(5), 3_200);
        assert_eq!(p.next_backoff_ms(20), 30_000);
        assert_eq!(p.next_backoff_ms(200), 30_000);
    }

    #[test]
    fn profile_validation() {
        assert!(ConnectionProfile::new(1, 500, 100, 0.0, 0).is_err());
        assert!(ConnectionProfile::new(1, 100, 500, 1.5, 0).is_err());
    }

    #[test]
    fn jitter_is_seeded() {
        let mut a = ConnectionProfile::new(1, 100, 30_000, 0.5, 9).unwrap();
        let mut b = ConnectionProfile::new(1, 100, 30_000, 0.5, 9).unwrap();
        let xs: Vec<_> = (0..10).map(|i| a.next_backoff_ms(i)).collect();
        let ys: Vec<_> = (0..10).map(|i| b.next_backoff_ms(i)).collect();
        assert_eq!(xs, ys);
    }

    proptest! {
        #[test]
        fn interval_within_bounds_and_monotone(r1 in -120.0f64..0.0, r2 in -120.0f64..0.0) {
            let (lo, hi) = (r1.min(r2), r1.max(r2));
            for p in [Priority::Critical, Priority::Standard] {
                let v = connection_interval_ms(p, lo);
                prop_assert!((7.5..=400.0).contains(&v));
            }
            prop_assert!(connection_interval_ms(Priority::Standard, hi) <= connection_interval_ms(Priority::Standard, lo));
        }

        #[test]
        fn backoff_bounded_and_monotone_without_jitter(base in 1u64..5_000, extra in 0u64..100_000,
                                                         jitter in 0.0f64..=1.0, seed in any::<u64>()) {
            let cap = base + extra;
            let mut plain = ConnectionProfile::new(3, base, cap, 0.0, seed).unwrap();
            let mut jittered = ConnectionProfile::new(3, base, cap, jitter, seed).unwrap();
            let mut prev = 0;
            for attempt in 0..70 {
                let v = plain.next_backoff_ms(attempt);
                prop_assert!(v >= prev);
                prev = v;
                let j = jittered.next_backoff_ms(attempt) as f64;
                prop_assert!(j <= cap as f64 * 1.5 + 0.5);
            }
        }
    }
}
