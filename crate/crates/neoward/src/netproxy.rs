//! HTTP proxy that injects latency and loss between any client and server.
//!
//! Each request draws from the same [`Impairment`] the in-process
//! `ImpairedLink` uses. A lost request never reaches the upstream; a lost
//! response does. Either way the client waits out `timeout_ms` and gets
//! `504`, which the sync client treats as a timeout.

use axum::body::{Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use neoward_core::sync::{Impairment, NetworkCondition, MAX_BODY, MAX_LATENCY_MS};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Clone, Debug)]
pub struct ProxyConfig {
    pub upstream: String,
    pub condition: NetworkCondition,
    pub timeout_ms: u64,
}

impl ProxyConfig {
    pub fn new(upstream: &str, condition: NetworkCondition) -> Self {
        ProxyConfig { upstream: upstream.trim_end_matches('/').to_string(), condition, timeout_ms: 2 * MAX_LATENCY_MS + 1_000 }
    }
}

#[derive(Debug, Default)]
pub struct ProxyStats {
    pub forwarded: AtomicU64,
    pub requests_lost: AtomicU64,
    pub responses_lost: AtomicU64,
}

pub struct Proxy {
    cfg: ProxyConfig,
    agent: ureq::Agent,
    imp: Mutex<Impairment>,
    pub stats: ProxyStats,
}

impl Proxy {
    pub fn new(cfg: ProxyConfig) -> Arc<Self> {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Arc::new(Proxy { imp: Mutex::new(Impairment::new(cfg.condition)), cfg, agent, stats: ProxyStats::default() })
    }

    fn draw_lost(&self) -> bool {
        self.imp.lock().expect("impairment poisoned").lost()
    }

    fn draw_latency(&self) -> u64 {
        self.imp.lock().expect("impairment poisoned").latency_ms()
    }

    fn upstream(&self, method: &str, path: &str, content_type: Option<String>, body: Bytes) -> Result<(u16, Option<String>, Vec<u8>), String> {
        let mut req = ureq::http::Request::builder().method(method).uri(format!("{}{path}", self.cfg.upstream));
        if let Some(ct) = content_type {
            req = req.header("content-type", ct);
        }
        let req = req.body(body.to_vec()).map_err(|e| e.to_string())?;
        let mut resp = self.agent.run(req).map_err(|e| e.to_string())?;
        let ct = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).map(str::to_string);
        let bytes = resp.body_mut().with_config().limit(MAX_BODY as u64).read_to_vec().map_err(|e| e.to_string())?;
        Ok((resp.status().as_u16(), ct, bytes))
    }
}

pub fn router(proxy: Arc<Proxy>) -> Router {
    Router::new().fallback(forward).with_state(proxy)
}

fn timeout() -> Response {
    (StatusCode::GATEWAY_TIMEOUT, "simulated loss").into_response()
}

async fn forward(State(p): State<Arc<Proxy>>, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let body = match axum::body::to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return (StatusCode::PAYLOAD_TOO_LARGE, e.to_string()).into_response(),
    };
    let timeout_ms = p.cfg.timeout_ms;
    if p.draw_lost() {
        p.stats.requests_lost.fetch_add(1, Ordering::Relaxed);
        tokio::time::sleep(Duration::from_millis(timeout_ms)).await;
        return timeout();
    }
    let up = p.draw_latency();
    tokio::time::sleep(Duration::from_millis(up)).await;
    let method = parts.method.as_str().to_string();
    let path = parts.uri.path_and_query().map(|pq| pq.as_str().to_string()).unwrap_or_else(|| "/".into());
    let ct = parts.headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).map(str::to_string);
    let inner = p.clone();
    let result = tokio::task::spawn_blocking(move || inner.upstream(&method, &path, ct, body)).await;
    p.stats.forwarded.fetch_add(1, Ordering::Relaxed);
    if p.draw_lost() {
        p.stats.responses_lost.fetch_add(1, Ordering::Relaxed);
        tokio::time::sleep(Duration::from_millis(timeout_ms.saturating_sub(up))).await;
        return timeout();
    }
    tokio::time::sleep(Duration::from_millis(p.draw_latency())).await;
    match result {
        Ok(Ok((status, ct, bytes))) => {
            let mut b = Response::builder().status(status);
            if let Some(ct) = ct {
                b = b.header(header::CONTENT_TYPE, ct);
            }
            b.body(Body::from(bytes)).unwrap_or_else(|e| (StatusCode::BAD_GATEWAY, e.to_string()).into_response())
        }
        Ok(Err(e)) => (StatusCode::BAD_GATEWAY, e).into_response(),
        Err(e) => (StatusCode::BAD_GATEWAY, e.to_string()).into_response(),
    }
}
