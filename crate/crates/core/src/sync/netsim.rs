//! Seeded network impairment: per-direction loss and uniform latency, played
//! out on a [`Clock`] so tests can run on simulated time.

use super::engine::{AggregationLink, LinkError};
use super::server::{AggregationServer, PushAck};
use super::SyncError;
use crate::clock::Clock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const MIN_LATENCY_MS: u64 = 50;
pub const MAX_LATENCY_MS: u64 = 2_000;
pub const MAX_LOSS: f64 = 0.30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCondition {
    pub latency_lo_ms: u64,
    pub latency_hi_ms: u64,
    pub loss: f64,
    pub seed: u64,
}

impl NetworkCondition {
    pub fn new(latency_lo_ms: u64, latency_hi_ms: u64, loss: f64, seed: u64) -> Result<Self, SyncError> {
        if latency_lo_ms < MIN_LATENCY_MS || latency_hi_ms > MAX_LATENCY_MS || latency_lo_ms > latency_hi_ms {
            return Err(SyncError::Config(format!(
                "latency range must lie within [{MIN_LATENCY_MS}, {MAX_LATENCY_MS}] ms with lo <= hi"
            )));
        }
        if !(0.0..=MAX_LOSS).contains(&loss) {
            return Err(SyncError::Config(format!("loss must lie in [0, {MAX_LOSS}]")));
        }
        Ok(NetworkCondition { latency_lo_ms, latency_hi_ms, loss, seed })
    }

    /// No latency, no loss. Outside the validated range on purpose.
    pub fn ideal() -> Self {
        NetworkCondition { latency_lo_ms: 0, latency_hi_ms: 0, loss: 0.0, seed: 0 }
    }

    /// Parse `LO..HI` (or a single value) in milliseconds.
    pub fn parse_latency(s: &str) -> Result<(u64, u64), SyncError> {
        let bad = || SyncError::Config(format!("bad latency range '{s}'"));
        match s.split_once("..") {
            Some((a, b)) => Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)),
            None => {
                let v = s.trim().parse().map_err(|_| bad())?;
                Ok((v, v))
            }
        }
    }
}

/// Seeded draw source for one impaired link.
pub struct Impairment {
    cond: NetworkCondition,
    rng: ChaCha8Rng,
}

impl Impairment {
    pub fn new(cond: NetworkCondition) -> Self {
        Impairment { rng: ChaCha8Rng::seed_from_u64(cond.seed), cond }
    }

    pub fn condition(&self) -> NetworkCondition {
        self.cond
    }

    pub fn latency_ms(&mut self) -> u64 {
        if self.cond.latency_hi_ms == 0 {
            return 0;
        }
        self.rng.random_range(self.cond.latency_lo_ms..=self.cond.latency_hi_ms)
    }

    pub fn lost(&mut self) -> bool {
        self.cond.loss > 0.0 && self.rng.random_bool(self.cond.loss)
    }
}

/// Wraps any link with request and response loss plus latency. A lost
/// message costs the client `timeout_ms` of clock time.
pub struct ImpairedLink<L> {
    inner: L,
    imp: Impairment,
    clock: Arc<dyn Clock>,
    pub timeout_ms: u64,
    pub requests_lost: u64,
    pub responses_lost: u64,
}

impl<L: AggregationLink> ImpairedLink<L> {
    pub fn new(inner: L, cond: NetworkCondition, clock: Arc<dyn Clock>) -> Self {
        ImpairedLink {
            inner,
            imp: Impairment::new(cond),
            clock,
            timeout_ms: 2 * MAX_LATENCY_MS + 1_000,
            requests_lost: 0,
            responses_lost: 0,
        }
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }

    fn round_trip<T>(&mut self, f: impl FnOnce(&mut L) -> Result<T, LinkError>) -> Result<T, LinkError> {
        if self.imp.lost() {
            self.requests_lost += 1;
            self.clock.sleep_ms(self.timeout_ms);
            return Err(LinkError::Timeout);
        }
        let up = self.imp.latency_ms();
        self.clock.sleep_ms(up);
        let result = f(&mut self.inner);
        if self.imp.lost() {
            self.responses_lost += 1;
            self.clock.sleep_ms(self.timeout_ms.saturating_sub(up));
            return Err(LinkError::Timeout);
        }
        self.clock.sleep_ms(self.imp.latency_ms());
        result
    }
}

impl<L: AggregationLink> AggregationLink for ImpairedLink<L> {
    fn push(&mut self, body: &[u8]) -> Result<PushAck, LinkError> {
        self.round_trip(|l| l.push(body))
    }

    fn cursor(&mut self) -> Result<u64, LinkError> {
        self.round_trip(|l| l.cursor())
    }
}

/// Direct in-process link to a server.
#[derive(Clone)]
pub struct LocalLink(pub Arc<AggregationServer>);

impl AggregationLink for LocalLink {
    fn push(&mut self, body: &[u8]) -> Result<PushAck, LinkError> {
        self.0.push(body).map_err(LinkError::from_server)
    }

    fn cursor(&mut self) -> Result<u64, LinkError> {
        Ok(self.0.cursor())
    }
}
