mod common;

use common::*;
use futures_util::{SinkExt, StreamExt};
use neoward::api::{self, ApiState, SyncTarget};
use neoward_core::clock::SimClock;
use neoward_core::gateway::Gateway;
use neoward_core::store::RecordKind;
use neoward_core::sync::{store_digest, AggregationServer, LocalLink, SyncConfig};
use neoward_core::token::{Role, TokenKey};
use neoward_core::VitalSample;
use serde_json::json;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio_tungstenite::tungstenite::Message;

fn serve(gw: &Arc<Gateway>, sync: Option<SyncTarget>) -> Served {
    let mut st = ApiState::new(gw.clone(), TokenKey::new(TOKEN_KEY));
    if let Some(t) = sync {
        st = st.with_sync(t);
    }
    Served::start(api::router(st))
}

fn setup() -> (SimClock, Arc<Gateway>, Served) {
    let clock = SimClock::new(NOW_MS);
    let gw = gateway(&clock);
    let s = serve(&gw, None);
    (clock, gw, s)
}

fn nurse() -> String {
    token("nurse", Role::Provider)
}

#[test]
fn bearer_auth_is_required() {
    let (clock, _gw, s) = setup();
    let r = get(&s, "/api/devices", None);
    assert_eq!(r.status, 401);
    assert_eq!(r.body["error"], "unauthorized");
    assert_eq!(get(&s, "/api/devices", Some("a.b.c")).status, 401);
    let forged = TokenKey::new([1; 32]).sign(&neoward_core::token::AuthToken { sub: "x".into(), role: Role::Provider, exp: u64::MAX });
    assert_eq!(get(&s, "/api/devices", Some(&forged)).status, 401);
    let t = nurse();
    assert_eq!(get(&s, "/api/devices", Some(&t)).status, 200);
    clock.advance(3601 * 1000);
    let r = get(&s, "/api/devices", Some(&t));
    assert_eq!(r.status, 401);
    assert_eq!(r.body["message"], "token expired");
}

#[test]
fn devices_and_vitals() {
    let (_c, gw, s) = setup();
    let samples: Vec<VitalSample> = (0..30).map(|i| sample(4, NOW_MS + i * 1000)).collect();
    feed(&gw, 4, &samples);
    let t = nurse();
    let r = get(&s, "/api/devices", Some(&t));
    assert_eq!(r.status, 200);
    assert_eq!(r.body.as_array().unwrap().len(), 1);
    assert_eq!(r.body[0]["device_id"], 4);
    assert_eq!(r.body[0]["samples"], 30);

    let r = get(&s, "/api/devices/4/vitals", Some(&t));
    assert_eq!(r.body.as_array().unwrap().len(), 30);
    let from = NOW_MS + 10_000;
    let to = NOW_MS + 19_000;
    let r = get(&s, &format!("/api/devices/4/vitals?from={from}&to={to}"), Some(&t));
    let got: Vec<VitalSample> = serde_json::from_value(r.body).unwrap();
    assert_eq!(got, samples[10..20].to_vec());
    assert_eq!(get(&s, &format!("/api/devices/4/vitals?from={to}&to={from}"), Some(&t)).status, 400);
    assert_eq!(get(&s, "/api/devices/4/vitals?from=abc", Some(&t)).status, 400);
}

#[test]
fn annotations_are_provider_only() {
    let (_c, gw, s) = setup();
    let r = post(&s, "/api/devices/2/annotations", Some(&nurse()), json!({"text": "fed 20 ml"}));
    assert_eq!(r.status, 201);
    assert_eq!(r.body["author"], "nurse");
    assert_eq!(r.body["t_ms"], NOW_MS);
    assert_eq!(gw.annotations(2).len(), 1);
    let r = post(&s, "/api/devices/2/annotations", Some(&token("mum", Role::Parent)), json!({"text": "x"}));
    assert_eq!(r.status, 403);
    assert_eq!(post(&s, "/api/devices/2/annotations", Some(&nurse()), json!({"nope": 1})).status, 422);
}

#[test]
fn parents_see_only_their_sessions_and_devices() {
    let (clock, gw, s) = setup();
    feed(&gw, 1, &[sample(1, NOW_MS)]);
    feed(&gw, 2, &[sample(2, NOW_MS)]);
    let mum = token("mum", Role::Parent);
    assert_eq!(get(&s, "/api/devices", Some(&mum)).body, json!([]));
    assert_eq!(get(&s, "/api/devices/1/vitals", Some(&mum)).status, 403);

    let r = post(&s, "/api/sessions/start", Some(&mum), json!({"device_id": 1}));
    assert_eq!(r.status, 201);
    assert_eq!(r.body["initiator"], "mum");
    let sid = r.body["session_id"].as_u64().unwrap();
    assert_eq!(post(&s, "/api/sessions/start", Some(&mum), json!({"device_id": 1})).status, 409);

    let devices = get(&s, "/api/devices", Some(&mum)).body;
    assert_eq!(devices.as_array().unwrap().len(), 1);
    assert_eq!(devices[0]["active_session"], sid);
    assert_eq!(get(&s, "/api/devices/1/vitals", Some(&mum)).status, 200);
    assert_eq!(get(&s, "/api/devices/2/vitals", Some(&mum)).status, 403);

    let other = post(&s, "/api/sessions/start", Some(&nurse()), json!({"device_id": 2})).body["session_id"].as_u64().unwrap();
    assert_eq!(post(&s, &format!("/api/sessions/{other}/stop"), Some(&mum), json!({})).status, 403);
    assert_eq!(get(&s, "/api/sessions", Some(&mum)).body.as_array().unwrap().len(), 1);
    assert_eq!(get(&s, "/api/sessions", Some(&nurse())).body.as_array().unwrap().len(), 2);
    assert_eq!(get(&s, "/api/sessions?device=2", Some(&nurse())).body[0]["session_id"], other);

    clock.advance(45 * 60 * 1000);
    let r = post(&s, &format!("/api/sessions/{sid}/stop"), Some(&mum), json!({}));
    assert_eq!(r.status, 200);
    assert_eq!(r.body["end_ms"].as_u64().unwrap() - r.body["start_ms"].as_u64().unwrap(), 45 * 60 * 1000);
    assert_eq!(post(&s, &format!("/api/sessions/{sid}/stop"), Some(&mum), json!({})).status, 409);
    assert_eq!(post(&s, "/api/sessions/999/stop", Some(&nurse()), json!({})).status, 404);
    assert_eq!(post(&s, "/api/sessions/999/stop", Some(&mum), json!({})).status, 404);

    for path in ["/api/alerts", "/api/sync/status"] {
        assert_eq!(get(&s, path, Some(&mum)).status, 403, "{path}");
    }
    for path in ["/api/alerts/1/ack", "/api/sync/trigger"] {
        assert_eq!(post(&s, path, Some(&mum), json!({})).status, 403, "{path}");
    }
}

fn raise_desaturation(gw: &Arc<Gateway>, dev: u64) {
    let low: Vec<VitalSample> = (0..10).map(|i| VitalSample { spo2: 8_000, ..sample(dev, NOW_MS + i * 1000) }).collect();
    feed(gw, dev, &low);
}

#[test]
fn alert_listing_and_acknowledgment() {
    let (_c, gw, s) = setup();
    raise_desaturation(&gw, 3);
    let t = nurse();
    let raised = get(&s, "/api/alerts?state=raised", Some(&t)).body;
    let list = raised.as_array().unwrap();
    assert!(!list.is_empty());
    let id = list[0]["alert_id"].as_u64().unwrap();
    assert_eq!(list[0]["device_id"], 3);

    let r = post(&s, &format!("/api/alerts/{id}/ack"), Some(&t), json!({}));
    assert_eq!(r.status, 200);
    assert_eq!(r.body["state"], "acknowledged");
    assert_eq!(r.body["acknowledged_by"], "nurse");
    // repeat acks are no-ops
    let again = post(&s, &format!("/api/alerts/{id}/ack"), Some(&t), json!({}));
    assert_eq!((again.status, again.body["state"].as_str()), (200, Some("acknowledged")));
    assert_eq!(post(&s, "/api/alerts/4242/ack", Some(&t), json!({})).status, 404);
    let acked = get(&s, "/api/alerts?state=acknowledged", Some(&t)).body;
    assert!(acked.as_array().unwrap().iter().any(|a| a["alert_id"] == id));
    assert!(get(&s, "/api/alerts?state=raised", Some(&t)).body.as_array().unwrap().iter().all(|a| a["alert_id"] != id));
    assert_eq!(get(&s, "/api/alerts?state=bogus", Some(&t)).status, 400);
    assert!(get(&s, "/api/alerts", Some(&t)).body.as_array().unwrap().len() >= list.len());
}

#[test]
fn sync_status_and_trigger() {
    let clock = SimClock::new(NOW_MS);
    let gw = gateway(&clock);
    let t = nurse();
    let bare = serve(&gw, None);
    assert_eq!(post(&bare, "/api/sync/trigger", Some(&t), json!({})).status, 503);

    feed(&gw, 1, &(0..40).map(|i| sample(1, NOW_MS + i * 1000)).collect::<Vec<_>>());
    gw.annotate(1, "nurse", "note", None).unwrap();
    let server = Arc::new(AggregationServer::in_memory());
    let srv = server.clone();
    let target = SyncTarget { connect: Arc::new(move || Box::new(LocalLink(srv.clone()))), config: SyncConfig::default() };
    let s = serve(&gw, Some(target));
    let st = get(&s, "/api/sync/status", Some(&t)).body;
    assert_eq!(st["running"], false);
    assert_eq!(st["pending"], 41);

    let r = post(&s, "/api/sync/trigger", Some(&t), json!({}));
    assert_eq!(r.status, 202);
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let st = get(&s, "/api/sync/status", Some(&t)).body;
        if !st["last_report"].is_null() && st["running"] == false {
            assert_eq!(st["pending"], 0);
            assert_eq!(st["last_report"]["pushed"], 41);
            break;
        }
        assert!(Instant::now() < deadline, "sync did not finish: {st}");
        std::thread::sleep(Duration::from_millis(20));
    }
    assert_eq!(server.digest(), store_digest(gw.store(), &RecordKind::ALL));
}

async fn next_text(ws: &mut (impl StreamExt<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin)) -> Option<serde_json::Value> {
    loop {
        match tokio::time::timeout(Duration::from_millis(500), ws.next()).await {
            Ok(Some(Ok(Message::Text(t)))) => return Some(serde_json::from_str(&t).unwrap()),
            Ok(Some(Ok(_))) => continue,
            _ => return None,
        }
    }
}

#[test]
fn websocket_stream_carries_typed_events() {
    let (_c, gw, s) = setup();
    let url = format!("ws://{}/ws/stream?token={}", s.addr, nurse());
    let (mut ws, _) = s.rt.block_on(tokio_tungstenite::connect_async(url)).unwrap();
    std::thread::sleep(Duration::from_millis(50));
    raise_desaturation(&gw, 6);
    let gw2 = gw.clone();
    s.rt.block_on(async {
        let mut types = Vec::new();
        while let Some(v) = next_text(&mut ws).await {
            if v["type"] == "vitals" {
                assert_eq!(v["device_id"], 6);
                assert!(v["samples"].as_array().is_some_and(|a| !a.is_empty()));
            }
            types.push(v["type"].as_str().unwrap().to_string());
        }
        assert!(types.iter().any(|t| t == "vitals"), "{types:?}");
        assert!(types.iter().any(|t| t == "alert"), "{types:?}");

        let server = Arc::new(AggregationServer::in_memory());
        tokio::task::spawn_blocking(move || gw2.sync_with(&mut LocalLink(server), &SyncConfig::default()).unwrap()).await.unwrap();
        let v = next_text(&mut ws).await.expect("sync event");
        assert_eq!(v["type"], "sync");
        assert_eq!(v["status"]["running"], true);
        ws.send(Message::Close(None)).await.unwrap();
    });
}

#[test]
fn websocket_parent_filter_and_auth() {
    let (_c, gw, s) = setup();
    assert!(s.rt.block_on(tokio_tungstenite::connect_async(format!("ws://{}/ws/stream", s.addr))).is_err());
    gw.start_session(1, "mum").unwrap();
    let url = format!("ws://{}/ws/stream?token={}", s.addr, token("mum", Role::Parent));
    let (mut ws, _) = s.rt.block_on(tokio_tungstenite::connect_async(url)).unwrap();
    std::thread::sleep(Duration::from_millis(50));
    raise_desaturation(&gw, 2);
    raise_desaturation(&gw, 1);
    let seen = s.rt.block_on(async {
        let mut seen = Vec::new();
        while let Some(v) = next_text(&mut ws).await {
            seen.push(v);
        }
        seen
    });
    assert!(!seen.is_empty());
    assert!(seen.iter().all(|v| v["type"] == "vitals" && v["device_id"] == 1), "{seen:?}");
    assert_eq!(gw.clock().now_ms(), NOW_MS);
}
