//! Sync client over HTTP, pointed at a mock server or a netsim proxy.

use crate::mockserver::{Checksum, CursorBody, ErrorBody};
use neoward_core::sync::{AggregationLink, LinkError, PushAck};
use serde::de::DeserializeOwned;
use std::time::Duration;
use ureq::http::Response;
use ureq::Body;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

pub struct HttpLink {
    agent: ureq::Agent,
    base: String,
}

impl HttpLink {
    /// `base` is the server root, e.g. `http://127.0.0.1:7500`.
    pub fn new(base: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpLink { agent, base: base.trim_end_matches('/').to_string() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn checksum(&mut self) -> Result<Checksum, LinkError> {
        read_json(self.agent.get(self.url("/api/sync/checksum")).call())
    }
}

fn read_json<T: DeserializeOwned>(r: Result<Response<Body>, ureq::Error>) -> Result<T, LinkError> {
    let mut resp = r.map_err(link_error)?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(link_error)?;
    match status {
        200..=299 => serde_json::from_str(&text).map_err(|e| LinkError::Transport(format!("bad response body: {e}"))),
        // gateway timeout from a proxy counts as a lost message
        504 => Err(LinkError::Timeout),
        _ => {
            let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
            Err(LinkError::Rejected { status, message })
        }
    }
}

fn link_error(e: ureq::Error) -> LinkError {
    match e {
        ureq::Error::Timeout(_) => LinkError::Timeout,
        e => LinkError::Transport(e.to_string()),
    }
}

impl AggregationLink for HttpLink {
    fn push(&mut self, body: &[u8]) -> Result<PushAck, LinkError> {
        let r = self.agent.post(self.url("/api/sync/push")).header("content-type", "application/octet-stream").send(body);
        read_json(r)
    }

    fn cursor(&mut self) -> Result<u64, LinkError> {
        read_json::<CursorBody>(self.agent.get(self.url("/api/sync/cursor")).call()).map(|c| c.cursor)
    }
}
