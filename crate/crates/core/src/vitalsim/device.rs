use super::{adaptive_rate, generate_sample, RateTiers, Scenario, SimError};
use crate::clock::Clock;
use crate::transport::{
    encode_batch, ConnectionProfile, DeviceKey, FeaturePayload, FrameSender, FrameSink, FrameType, MAX_PAYLOAD,
};
use crate::vitals::VitalSample;

#[derive(Clone, Debug)]
pub struct DeviceConfig {
    pub device_id: u64,
    pub update_interval_s: u8,
    pub tiers: RateTiers,
    /// Send attempts per frame after the first failure before it is dropped.
    pub max_retries: u32,
    /// Sleep on the clock so frames leave at their scenario time.
    pub realtime: bool,
}

impl DeviceConfig {
    pub fn new(device_id: u64, update_interval_s: u8) -> Self {
        DeviceConfig { device_id, update_interval_s, tiers: RateTiers::default(), max_retries: 8, realtime: false }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub samples: u64,
    pub frames: u64,
    pub bursts: u64,
    pub reconnects: u64,
    pub failed_frames: u64,
}

/// One simulated wearable. Owns its frame counters and reconnect profile.
pub struct SimDevice {
    config: DeviceConfig,
    sender: FrameSender,
    profile: ConnectionProfile,
    stats: StreamStats,
}

impl SimDevice {
    pub fn new(config: DeviceConfig, key: DeviceKey) -> Result<Self, SimError> {
        if config.update_interval_s == 0 {
            return Err(SimError::NonPositive("update interval"));
        }
        config.tiers.validate()?;
        Ok(SimDevice {
            sender: FrameSender::new(config.device_id, key),
            profile: ConnectionProfile::with_defaults(config.device_id),
            config,
            stats: StreamStats::default(),
        })
    }

    pub fn with_profile(mut self, profile: ConnectionProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn stats(&self) -> StreamStats {
        self.stats
    }

    /// Stream the whole scenario into `sink`.
    pub fn run(&mut self, scenario: &Scenario, sink: &mut dyn FrameSink, clock: &dyn Clock) -> Result<StreamStats, SimError> {
        scenario.validate()?;
        let wall_start = clock.now_ms();
        if scenario.static_features.is_some() || scenario.semistatic_features.is_some() {
            let payload = FeaturePayload {
                static_features: scenario.static_features.map(|s| s.to_vec()).unwrap_or_default(),
                semistatic_features: scenario.semistatic_features.clone().unwrap_or_default(),
            };
            self.send(FrameType::StaticFeatures, &payload.encode(), sink, clock)?;
        }
        let interval_ms = self.config.update_interval_s as u64 * 1000;
        let mut next_boundary = scenario.start_ms + interval_ms;
        let mut pending: Vec<VitalSample> = Vec::new();
        let mut t = scenario.start_ms;
        while t < scenario.end_ms() {
            let sample = generate_sample(scenario, self.config.device_id, t)?;
            if t >= next_boundary {
                self.flush(&mut pending, sink, clock, wall_start, scenario.start_ms, t)?;
                while next_boundary <= t {
                    next_boundary += interval_ms;
                }
            }
            self.stats.samples += 1;
            let burst = sample.flags.event();
            let step = 1000 / adaptive_rate(sample.motion, &self.config.tiers) as u64;
            pending.push(sample);
            if burst {
                self.stats.bursts += 1;
                self.flush(&mut pending, sink, clock, wall_start, scenario.start_ms, t)?;
            }
            t += step.max(1);
        }
        self.flush(&mut pending, sink, clock, wall_start, scenario.start_ms, scenario.end_ms())?;
        Ok(self.stats)
    }

    fn flush(
        &mut self,
        pending: &mut Vec<VitalSample>,
        sink: &mut dyn FrameSink,
        clock: &dyn Clock,
        wall_start: u64,
        sim_start: u64,
        sim_now: u64,
    ) -> Result<(), SimError> {
        if pending.is_empty() {
            return Ok(());
        }
        if self.config.realtime {
            let due = wall_start + (sim_now - sim_start);
            let now = clock.now_ms();
            if due > now {
                clock.sleep_ms(due - now);
            }
        }
        let batch = std::mem::take(pending);
        for payload in split_to_fit(&batch)? {
            self.send(FrameType::VitalsBatch, &payload, sink, clock)?;
        }
        Ok(())
    }

    fn send(&mut self, ty: FrameType, payload: &[u8], sink: &mut dyn FrameSink, clock: &dyn Clock) -> Result<(), SimError> {
        let frame = self.sender.build(ty, payload)?;
        let mut attempt = 0;
        loop {
            match sink.send_frame(&frame) {
                Ok(()) => {
                    self.stats.frames += 1;
                    return Ok(());
                }
                Err(_) if attempt < self.config.max_retries => {
                    clock.sleep_ms(self.profile.next_backoff_ms(attempt));
                    attempt += 1;
                    self.stats.reconnects += 1;
                    let _ = sink.reconnect();
                }
                Err(_) => {
                    self.stats.failed_frames += 1;
                    return Ok(());
                }
            }
        }
    }
}

/// Encode a batch, halving it until every piece fits a frame.
fn split_to_fit(batch: &[VitalSample]) -> Result<Vec<Vec<u8>>, SimError> {
    let encoded = encode_batch(batch)?;
    if encoded.len() <= MAX_PAYLOAD || batch.len() == 1 {
        return Ok(vec![encoded]);
    }
    let (a, b) = batch.split_at(batch.len() / 2);
    let mut out = split_to_fit(a)?;
    out.extend(split_to_fit(b)?);
    Ok(out)
}

/// Convenience wrapper: build a device and stream `scenario` into `sink`.
pub fn run_device(
    scenario: &Scenario,
    sink: &mut dyn FrameSink,
    config: DeviceConfig,
    key: DeviceKey,
    clock: &dyn Clock,
) -> Result<StreamStats, SimError> {
    SimDevice::new(config, key)?.run(scenario, sink, clock)
}
