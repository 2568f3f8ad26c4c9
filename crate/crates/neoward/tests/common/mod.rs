#![allow(dead_code)]

use axum::Router;
use neoward_core::clock::SimClock;
use neoward_core::gateway::{Gateway, GatewayConfig};
use neoward_core::store::Store;
use neoward_core::token::{AuthToken, Role, TokenKey};
use neoward_core::transport::{encode_batch, FleetKey, FrameSender, FrameType};
use neoward_core::{SampleFlags, VitalSample};
use std::net::SocketAddr;
use std::sync::Arc;

pub const FLEET: FleetKey = FleetKey([7; 32]);
pub const TOKEN_KEY: [u8; 32] = [9; 32];
/// Gateway clock start; tokens below expire an hour later.
pub const NOW_MS: u64 = 1_700_000_000_000;

pub fn gateway(clock: &SimClock) -> Arc<Gateway> {
    Gateway::new(Arc::new(Store::in_memory(&[3; 32])), Arc::new(FLEET), Arc::new(clock.clone()), GatewayConfig::default()).unwrap()
}

pub fn token(sub: &str, role: Role) -> String {
    TokenKey::new(TOKEN_KEY).sign(&AuthToken { sub: sub.into(), role, exp: NOW_MS / 1000 + 3600 })
}

pub fn sample(dev: u64, t_ms: u64) -> VitalSample {
    VitalSample { device_id: dev, t_ms, hr: 14_000, spo2: 9_700, rr: 4_500, temp: 3_680, motion: 0, flags: SampleFlags(0) }
}

/// Push samples through the authenticated device path and drain.
pub fn feed(gw: &Arc<Gateway>, dev: u64, samples: &[VitalSample]) {
    let mut tx = FrameSender::new(dev, FLEET.device_key(dev));
    let mut ingest = gw.connect(dev).unwrap();
    for chunk in samples.chunks(5) {
        let frame = tx.build(FrameType::VitalsBatch, &encode_batch(chunk).unwrap()).unwrap();
        ingest.receive(&frame).unwrap();
    }
    drop(ingest);
    gw.drain();
}

/// Axum app on an ephemeral port, served from its own runtime.
pub struct Served {
    pub rt: tokio::runtime::Runtime,
    pub addr: SocketAddr,
}

impl Served {
    pub fn start(app: Router) -> Self {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let addr = listener.local_addr().unwrap();
        rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Served { rt, addr }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub struct Reply {
    pub status: u16,
    pub body: serde_json::Value,
}

fn reply(r: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Reply {
    let mut r = r.unwrap();
    let status = r.status().as_u16();
    let text = r.body_mut().read_to_string().unwrap();
    Reply { status, body: serde_json::from_str(&text).unwrap_or(serde_json::Value::String(text)) }
}

pub fn get(s: &Served, path: &str, token: Option<&str>) -> Reply {
    let mut req = agent().get(s.url(path));
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    reply(req.call())
}

pub fn post(s: &Served, path: &str, token: Option<&str>, body: serde_json::Value) -> Reply {
    let mut req = agent().post(s.url(path)).header("content-type", "application/json");
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    reply(req.send(body.to_string().as_bytes()))
}
