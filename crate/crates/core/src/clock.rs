//! Wall and simulated clocks.
//!
//! Backoff waits and link latency go through [`Clock`] so that the same code
//! runs against real time in the CLI and a virtual timeline in tests.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep_ms(&self, ms: u64);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }

    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

/// Virtual clock; `sleep_ms` advances time instantly. Clones share the timeline.
#[derive(Clone, Debug, Default)]
pub struct SimClock {
    now: Arc<AtomicU64>,
}

impl SimClock {
    pub fn new(start_ms: u64) -> Self {
        SimClock { now: Arc::new(AtomicU64::new(start_ms)) }
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, ms: u64) {
        self.now.store(ms, Ordering::SeqCst);
    }
}

impl Clock for SimClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_ms(&self, ms: u64) {
        self.advance(ms);
    }
}

/// Wall time running `speed` times faster than real time. Starts at the
/// system time of construction.
#[derive(Clone, Debug)]
pub struct ScaledClock {
    origin: Instant,
    origin_ms: u64,
    speed: f64,
}

impl ScaledClock {
    pub fn new(speed: f64) -> Self {
        assert!(speed > 0.0, "clock speed must be positive");
        ScaledClock { origin: Instant::now(), origin_ms: SystemClock.now_ms(), speed }
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }
}

impl Clock for ScaledClock {
    fn now_ms(&self) -> u64 {
        self.origin_ms + (self.origin.elapsed().as_secs_f64() * 1_000.0 * self.speed) as u64
    }

    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_secs_f64(ms as f64 / 1_000.0 / self.speed));
    }
}
