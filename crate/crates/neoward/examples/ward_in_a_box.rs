//! The whole ward in one process: simulated wearables over TCP, the gateway,
//! its HTTP API, and a mock aggregation server to sync to. Ends with a short
//! tour of the API as a nurse would use it.
//!
//! ```text
//! cargo run -p neoward --example ward_in_a_box
//! ```

use neoward::api::{self, ApiState, SyncTarget};
use neoward::httplink::{HttpLink, DEFAULT_TIMEOUT};
use neoward::mockserver;
use neoward::{DeviceServer, Drainer};
use neoward_core::clock::{ScaledClock, SystemClock};
use neoward_core::gateway::{Gateway, GatewayConfig};
use neoward_core::store::{RecordKind, Store};
use neoward_core::sync::{store_digest, AggregationServer, SyncConfig};
use neoward_core::token::{AuthToken, Role, TokenKey};
use neoward_core::transport::{FleetKey, TcpFrameSink};
use neoward_core::vitalsim::{DeviceConfig, Scenario, SimDevice};
use serde_json::Value;
use std::error::Error;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

const FLEET: FleetKey = FleetKey([7; 32]);
const SPEED: f64 = 60.0;
const MINUTES: u64 = 10;

fn serve(rt: &tokio::runtime::Runtime, app: axum::Router) -> SocketAddr {
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

fn call(agent: &ureq::Agent, method: &str, url: &str, token: &str, body: &str) -> Result<Value, Box<dyn Error>> {
    let auth = format!("Bearer {token}");
    let mut resp = match method {
        "GET" => agent.get(url).header("authorization", &auth).call()?,
        _ => agent.post(url).header("authorization", &auth).header("content-type", "application/json").send(body)?,
    };
    Ok(serde_json::from_str(&resp.body_mut().read_to_string()?)?)
}

fn main() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let store = Arc::new(Store::open(dir.path(), &[3; 32])?);
    let gw = Gateway::new(store, Arc::new(FLEET), Arc::new(SystemClock), GatewayConfig::default())?;
    let drainer = Drainer::spawn(gw.clone(), Duration::from_millis(200));
    let devices = DeviceServer::bind("127.0.0.1:0".parse()?, gw.clone(), drainer.wake())?;

    let rt = tokio::runtime::Runtime::new()?;
    let agg = Arc::new(AggregationServer::in_memory());
    let agg_url = format!("http://{}", serve(&rt, mockserver::router(agg.clone())));
    let target = SyncTarget {
        connect: Arc::new(move || Box::new(HttpLink::new(&agg_url, DEFAULT_TIMEOUT))),
        config: SyncConfig::default(),
    };
    let token_key = TokenKey::new([9; 32]);
    let api_url = format!("http://{}", serve(&rt, api::router(ApiState::new(gw.clone(), token_key.clone()).with_sync(target))));

    println!("simulating {MINUTES} min of 6 cots at {SPEED}x ...");
    let addr = devices.local_addr();
    let cots = ["stable", "desaturation", "bradycardia", "apnea", "glitchy", "stable"];
    let threads: Vec<_> = cots
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let name = name.to_string();
            std::thread::spawn(move || {
                let id = 101 + i as u64;
                let mut cfg = DeviceConfig::new(id, 2);
                cfg.realtime = true;
                let mut s = Scenario::builtin(&name, MINUTES * 60, id).unwrap();
                s.start_ms = SystemTime::now().duration_since(UNIX_EPOCH).unwrap().as_millis() as u64;
                let mut sink = TcpFrameSink::connect(addr).unwrap();
                SimDevice::new(cfg, FLEET.device_key(id)).unwrap().run(&s, &mut sink, &ScaledClock::new(SPEED)).unwrap()
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    std::thread::sleep(Duration::from_millis(500));
    let st = gw.stats();
    println!("gateway: {} frames, {} samples, p99 ingest {:.2} ms, {} alerts raised", st.frames, st.samples, st.latency.p99_ms, st.alerts.raised);

    let exp = SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs() + 600;
    let nurse = token_key.sign(&AuthToken { sub: "nurse-ana".into(), role: Role::Provider, exp });
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let url = |p: &str| format!("{api_url}{p}");

    let devs = call(&agent, "GET", &url("/api/devices"), &nurse, "{}")?;
    for d in devs.as_array().into_iter().flatten() {
        println!("  device {} {} samples, connected {}", d["device_id"], d["samples"], d["connected"]);
    }
    let alerts = call(&agent, "GET", &url("/api/alerts?state=raised"), &nurse, "{}")?;
    let alerts = alerts.as_array().cloned().unwrap_or_default();
    for a in &alerts {
        println!("  alert {} device {} {} {} x{} p={:.2}", a["alert_id"], a["device_id"], a["source"], a["direction"], a["event_count"], a["posterior"].as_f64().unwrap_or(0.0));
    }
    if let Some(a) = alerts.first() {
        let acked = call(&agent, "POST", &url(&format!("/api/alerts/{}/ack", a["alert_id"])), &nurse, "{}")?;
        println!("  acknowledged {} -> {}", acked["alert_id"], acked["state"]);
    }

    let kmc = call(&agent, "POST", &url("/api/sessions/start"), &nurse, r#"{"device_id": 101}"#)?;
    println!("  skin-to-skin session {} started on device {}", kmc["session_id"], kmc["device_id"]);
    let kmc = call(&agent, "POST", &url(&format!("/api/sessions/{}/stop", kmc["session_id"])), &nurse, "{}")?;
    println!("  session stopped at {}", kmc["end_ms"]);

    println!("sync ...");
    call(&agent, "POST", &url("/api/sync/trigger"), &nurse, "{}")?;
    loop {
        std::thread::sleep(Duration::from_millis(200));
        let s = call(&agent, "GET", &url("/api/sync/status"), &nurse, "{}")?;
        if s["running"] == false && s["last_sync_ms"].is_number() {
            println!("  cursor {} of {}, pushed {}", s["cursor"], s["head_cursor"], s["last_report"]["pushed"]);
            break;
        }
        if let Some(e) = s["last_error"].as_str() {
            println!("  failed: {e}");
            break;
        }
    }
    let same = agg.digest() == store_digest(gw.store(), &RecordKind::ALL);
    println!("aggregation server digest {}", if same { "matches the ward store" } else { "differs" });

    devices.shutdown();
    drainer.shutdown();
    Ok(())
}
