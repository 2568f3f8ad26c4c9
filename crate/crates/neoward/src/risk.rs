//! Model risk scores as an alert source.

use neoward_core::gateway::{Gateway, RiskHook};
use neoward_core::VitalSample;
use neoward_smt::{Model, StreamInferer};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, Weak};

/// Static and semi-static features for a device, if known.
pub type FeatureSource = Box<dyn Fn(u64) -> Option<(Vec<f64>, Vec<f64>)> + Send + Sync>;

const FEATURE_REFRESH: u64 = 60;

struct DeviceStream {
    inferer: StreamInferer,
    seen: u64,
}

/// One streaming inferer per device; reports the newest `p_high`.
pub struct SmtRisk {
    model: Arc<Model>,
    features: Option<FeatureSource>,
    streams: Mutex<HashMap<u64, DeviceStream>>,
}

impl SmtRisk {
    pub fn new(model: Arc<Model>) -> Self {
        SmtRisk { model, features: None, streams: Mutex::new(HashMap::new()) }
    }

    pub fn with_features(mut self, f: FeatureSource) -> Self {
        self.features = Some(f);
        self
    }

    /// Features come from the gateway's device metadata. Holds the gateway
    /// weakly; the gateway owns the hook.
    pub fn with_gateway_features(self, gw: &Arc<Gateway>) -> Self {
        let weak: Weak<Gateway> = Arc::downgrade(gw);
        self.with_features(Box::new(move |id| {
            let meta = weak.upgrade()?.device_meta(id)?;
            Some((meta.static_features, meta.semistatic_features))
        }))
    }
}

fn non_empty(v: Vec<f64>) -> Option<Vec<f64>> {
    (!v.is_empty()).then_some(v)
}

impl RiskHook for SmtRisk {
    fn on_sample(&self, sample: &VitalSample) -> Option<f64> {
        let mut streams = self.streams.lock().expect("risk streams poisoned");
        let st = streams
            .entry(sample.device_id)
            .or_insert_with(|| DeviceStream { inferer: StreamInferer::new(self.model.clone()), seen: 0 });
        if st.seen % FEATURE_REFRESH == 0 {
            if let Some((s, semi)) = self.features.as_ref().and_then(|f| f(sample.device_id)) {
                st.inferer.set_features(non_empty(s), non_empty(semi));
            }
        }
        st.seen += 1;
        match st.inferer.push(sample) {
            Ok(out) => out.iter().rev().find_map(|o| o.score()).map(|s| s.p_high),
            Err(e) => {
                tracing::warn!(device = sample.device_id, error = %e, "risk inference failed");
                None
            }
        }
    }
}
