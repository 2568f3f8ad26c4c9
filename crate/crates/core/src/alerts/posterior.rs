//! Odds-form false-alarm posterior with a Beta-mean prior.

use super::AlertError;
use serde::{Deserialize, Serialize};

/// Probability that an abnormal reading reflects a true event, given prior
/// event probability `prior` and sensor reliability `r`.
pub fn posterior(prior: f64, r: f64) -> f64 {
    let num = prior * r;
    let den = num + (1.0 - prior) * (1.0 - r);
    if den == 0.0 {
        return prior;
    }
    num / den
}

/// Sensor reliability r in the open interval (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reliability(f64);

impl Reliability {
    pub fn new(r: f64) -> Result<Self, AlertError> {
        if r > 0.0 && r < 1.0 {
            Ok(Reliability(r))
        } else {
            Err(AlertError::Config(format!("reliability {r} must lie strictly between 0 and 1")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Beta(a, b) event history. `a` counts confirmed alerts, `b` suppressed ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventHistory {
    pub a: f64,
    pub b: f64,
}

impl Default for EventHistory {
    /// Prior mean 0.05.
    fn default() -> Self {
        EventHistory { a: 1.0, b: 19.0 }
    }
}

impl EventHistory {
    pub fn new(a: f64, b: f64) -> Result<Self, AlertError> {
        if a >= 1.0 && b >= 1.0 && a.is_finite() && b.is_finite() {
            Ok(EventHistory { a, b })
        } else {
            Err(AlertError::Config("history counts must be >= 1".into()))
        }
    }

    pub fn prior(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn confirm(&mut self) {
        self.a += 1.0;
    }

    pub fn reject(&mut self) {
        self.b += 1.0;
    }
}

/// Reliability and history for one device and vital.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityState {
    pub reliability: Reliability,
    /// Used for samples flagged sensor-degraded.
    pub degraded_reliability: Reliability,
    pub history: EventHistory,
}

impl Default for ReliabilityState {
    fn default() -> Self {
        ReliabilityState {
            reliability: Reliability(0.9),
            degraded_reliability: Reliability(0.6),
            history: EventHistory::default(),
        }
    }
}

impl ReliabilityState {
    pub fn r(&self, degraded: bool) -> f64 {
        if degraded {
            self.degraded_reliability.get()
        } else {
            self.reliability.get()
        }
    }

    /// Posterior for the first reading of an episode.
    pub fn score(&self, degraded: bool) -> f64 {
        posterior(self.history.prior(), self.r(degraded))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uninformative_sensor_returns_prior() {
        for pi in [0.01, 0.05, 0.3, 0.9] {
            assert!((posterior(pi, 0.5) - pi).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_half() {
        assert!((posterior(0.1, 0.9) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn default_history_glitch_posterior() {
        // 0.045 / (0.045 + 0.095)
        let p = ReliabilityState::default().score(false);
        assert!((p - 9.0 / 28.0).abs() < 1e-12);
        assert!(p < 0.5);
    }

    #[test]
    fn degenerate_reliability_rejected() {
        assert!(Reliability::new(0.0).is_err());
        assert!(Reliability::new(1.0).is_err());
        assert!(Reliability::new(0.3).is_ok());
        assert!(EventHistory::new(0.5, 3.0).is_err());
    }

    #[test]
    fn monotone_on_grid() {
        let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        for &pi in &grid {
            for w in grid.windows(2) {
                assert!(posterior(pi, w[1]) > posterior(pi, w[0]), "r monotonicity at pi={pi}");
                assert!(posterior(w[1], pi) > posterior(w[0], pi), "pi monotonicity at r={pi}");
            }
        }
    }

    proptest! {
        #[test]
        fn posterior_strictly_inside_unit_interval(pi in 1e-6f64..(1.0 - 1e-6), r in 1e-6f64..(1.0 - 1e-6)) {
            let p = posterior(pi, r);
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }
}
