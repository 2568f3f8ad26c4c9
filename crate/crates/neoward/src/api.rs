//! Gateway HTTP API and live WebSocket feed.
//!
//! Every route needs `Authorization: Bearer <token>`; the WebSocket also
//! accepts `?token=` because browsers cannot set headers on upgrade.
//!
//! | route | provider | parent |
//! |---|---|---|
//! | `GET /api/devices` | all | devices with a session they started |
//! | `GET /api/devices/{id}/vitals?from&to` | yes | own devices |
//! | `POST /api/devices/{id}/annotations` | yes | 403 |
//! | `GET /api/sessions?device=` | all | own sessions |
//! | `POST /api/sessions/start` | yes | yes |
//! | `POST /api/sessions/{id}/stop` | yes | own sessions |
//! | `GET /api/alerts?state=` | yes | 403 |
//! | `POST /api/alerts/{id}/ack` | yes | 403 |
//! | `GET /api/sync/status` | yes | 403 |
//! | `POST /api/sync/trigger` | yes | 403 |
//! | `GET /ws/stream` | every event | vitals of own devices |
//!
//! Errors are JSON `{"error": kind, "message": text}`.
//!
//! Stream messages are the serialized `GatewayEvent`, one per text frame:
//!
//! ```text
//! {"type":"vitals","device_id":3,"samples":[{"device_id":3,"t_ms":..,"hr":14000,..}]}
//! {"type":"alert","change":"raised","alert":{"alert_id":1,..}}
//! {"type":"sync","status":{"running":true,"cursor":..,..}}
//! ```

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use neoward_core::alerts::{AlertError, AlertState};
use neoward_core::gateway::{Gateway, GatewayError, GatewayEvent, KmcSession};
use neoward_core::sync::{AggregationLink, SyncConfig};
use neoward_core::token::{AuthToken, Role, TokenError, TokenKey};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path as FsPath;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio::sync::broadcast::error::RecvError;

pub type LinkFactory = Arc<dyn Fn() -> Box<dyn AggregationLink + Send> + Send + Sync>;

/// Where `POST /api/sync/trigger` pushes to.
#[derive(Clone)]
pub struct SyncTarget {
    pub connect: LinkFactory,
    pub config: SyncConfig,
}

#[derive(Clone)]
pub struct ApiState {
    pub gateway: Arc<Gateway>,
    pub tokens: TokenKey,
    pub sync: Option<SyncTarget>,
}

impl ApiState {
    pub fn new(gateway: Arc<Gateway>, tokens: TokenKey) -> Self {
        ApiState { gateway, tokens, sync: None }
    }

    pub fn with_sync(mut self, target: SyncTarget) -> Self {
        self.sync = Some(target);
        self
    }

    fn now_s(&self) -> u64 {
        self.gateway.clock().now_ms() / 1000
    }

    pub fn authenticate(&self, token: Option<&str>) -> Result<AuthToken, ApiError> {
        let token = token.ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
        self.tokens.verify(token, self.now_s()).map_err(|e| match e {
            TokenError::Expired { .. } => ApiError::unauthorized("token expired"),
            e => ApiError::unauthorized(&e.to_string()),
        })
    }
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/api/devices", get(list_devices))
        .route("/api/devices/{id}/vitals", get(device_vitals))
        .route("/api/devices/{id}/annotations", post(add_annotation))
        .route("/api/sessions", get(list_sessions))
        .route("/api/sessions/start", post(start_session))
        .route("/api/sessions/{id}/stop", post(stop_session))
        .route("/api/alerts", get(list_alerts))
        .route("/api/alerts/{id}/ack", post(ack_alert))
        .route("/api/sync/status", get(sync_status))
        .route("/api/sync/trigger", post(sync_trigger))
        .route("/ws/stream", get(ws_stream))
        .with_state(state)
}

/// Serve a built console bundle under `/console`.
pub fn with_console(router: Router, dir: &FsPath) -> Router {
    router.nest_service("/console", tower_http::services::ServeDir::new(dir))
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, kind, message: message.into() }
    }

    fn unauthorized(message: &str) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    fn forbidden() -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", "role not permitted")
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid", message)
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let (status, kind) = match &e {
            GatewayError::NotFound(_) | GatewayError::Alert(AlertError::NotFound(_)) => (StatusCode::NOT_FOUND, "not_found"),
            GatewayError::Conflict(_) | GatewayError::Alert(AlertError::InvalidTransition { .. }) => {
                (StatusCode::CONFLICT, "conflict")
            }
            GatewayError::Invalid(_) | GatewayError::Alert(_) => (StatusCode::BAD_REQUEST, "invalid"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(ErrorBody { error: self.kind, message: &self.message });
        if self.status == StatusCode::UNAUTHORIZED {
            (self.status, [(header::WWW_AUTHENTICATE, "Bearer")], body).into_response()
        } else {
            (self.status, body).into_response()
        }
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION)?.to_str().ok()?.strip_prefix("Bearer ")
}

/// Verified caller of a request.
pub struct Caller(pub AuthToken);

impl FromRequestParts<ApiState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &ApiState) -> Result<Self, Self::Rejection> {
        state.authenticate(bearer(&parts.headers)).map(Caller)
    }
}

impl Caller {
    fn provider(&self) -> Result<(), ApiError> {
        match self.0.role {
            Role::Provider => Ok(()),
            Role::Parent => Err(ApiError::forbidden()),
        }
    }

    fn is_provider(&self) -> bool {
        self.0.role == Role::Provider
    }
}

fn own_devices(gw: &Gateway, sub: &str) -> HashSet<u64> {
    gw.sessions_where(|s| s.initiator == sub).into_iter().map(|s| s.device_id).collect()
}

fn can_see(gw: &Gateway, caller: &Caller, device_id: u64) -> bool {
    caller.is_provider() || own_devices(gw, &caller.0.sub).contains(&device_id)
}

async fn list_devices(State(st): State<ApiState>, caller: Caller) -> impl IntoResponse {
    let mut devices = st.gateway.devices();
    if !caller.is_provider() {
        let own = own_devices(&st.gateway, &caller.0.sub);
        devices.retain(|d| own.contains(&d.device_id));
    }
    Json(devices)
}

#[derive(Debug, Deserialize)]
struct RangeQuery {
    from: Option<u64>,
    to: Option<u64>,
}

async fn device_vitals(
    State(st): State<ApiState>,
    caller: Caller,
    Path(id): Path<u64>,
    Query(q): Query<RangeQuery>,
) -> Result<impl IntoResponse, ApiError> {
    if !can_see(&st.gateway, &caller, id) {
        return Err(ApiError::forbidden());
    }
    let (from, to) = (q.from.unwrap_or(0), q.to.unwrap_or(u64::MAX));
    if from > to {
        return Err(ApiError::bad_request("from is after to"));
    }
    Ok(Json(st.gateway.query_vitals(id, from, to)?))
}

#[derive(Debug, Deserialize)]
struct NewAnnotation {
    text: String,
    t_ms: Option<u64>,
}

async fn add_annotation(
    State(st): State<ApiState>,
    caller: Caller,
    Path(id): Path<u64>,
    Json(body): Json<NewAnnotation>,
) -> Result<impl IntoResponse, ApiError> {
    caller.provider()?;
    let a = st.gateway.annotate(id, &caller.0.sub, &body.text, body.t_ms)?;
    Ok((StatusCode::CREATED, Json(a)))
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    device: Option<u64>,
}

async fn list_sessions(State(st): State<ApiState>, caller: Caller, Query(q): Query<SessionQuery>) -> impl IntoResponse {
    let sub = caller.0.sub.clone();
    let provider = caller.is_provider();
    let sessions: Vec<KmcSession> = st
        .gateway
        .sessions_where(|s| (provider || s.initiator == sub) && q.device.is_none_or(|d| d == s.device_id));
    Json(sessions)
}

#[derive(Debug, Deserialize)]
struct StartSession {
    device_id: u64,
}

async fn start_session(
    State(st): State<ApiState>,
    caller: Caller,
    Json(body): Json<StartSession>,
) -> Result<impl IntoResponse, ApiError> {
    let s = st.gateway.start_session(body.device_id, &caller.0.sub)?;
    Ok((StatusCode::CREATED, Json(s)))
}

async fn stop_session(State(st): State<ApiState>, caller: Caller, Path(id): Path<u64>) -> Result<impl IntoResponse, ApiError> {
    if !caller.is_provider() {
        match st.gateway.session(id) {
            Some(s) if s.initiator == caller.0.sub => {}
            Some(_) => return Err(ApiError::forbidden()),
            None => return Err(GatewayError::NotFound(format!("session {id}")).into()),
        }
    }
    Ok(Json(st.gateway.stop_session(id)?))
}

#[derive(Debug, Deserialize)]
struct AlertQuery {
    state: Option<String>,
}

async fn list_alerts(State(st): State<ApiState>, caller: Caller, Query(q): Query<AlertQuery>) -> Result<impl IntoResponse, ApiError> {
    caller.provider()?;
    let state = match q.state.as_deref() {
        None | Some("") | Some("all") => None,
        Some(s) => Some(s.parse::<AlertState>().map_err(|e| ApiError::bad_request(e.to_string()))?),
    };
    Ok(Json(st.gateway.alerts(state)))
}

async fn ack_alert(State(st): State<ApiState>, caller: Caller, Path(id): Path<u64>) -> Result<impl IntoResponse, ApiError> {
    caller.provider()?;
    Ok(Json(st.gateway.acknowledge(id, &caller.0.sub)?))
}

async fn sync_status(State(st): State<ApiState>, caller: Caller) -> Result<impl IntoResponse, ApiError> {
    caller.provider()?;
    Ok(Json(st.gateway.sync_status()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TriggerAck {
    pub started: bool,
}

/// Starts a pass in the background; progress arrives on the stream and
/// in `/api/sync/status`.
async fn sync_trigger(State(st): State<ApiState>, caller: Caller) -> Result<impl IntoResponse, ApiError> {
    caller.provider()?;
    let target = st
        .sync
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "no sync server configured"))?;
    if st.gateway.is_syncing() {
        return Err(ApiError::new(StatusCode::CONFLICT, "conflict", "sync already running"));
    }
    let gw = st.gateway.clone();
    tokio::task::spawn_blocking(move || {
        let mut link = (target.connect)();
        match gw.sync_with(link.as_mut(), &target.config) {
            Ok(Some(r)) => tracing::info!(pushed = r.pushed, cursor = r.final_cursor, "sync pass done"),
            Ok(None) => tracing::debug!("sync already running"),
            Err(e) => tracing::warn!(error = %e, "sync pass failed"),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(TriggerAck { started: true })))
}

#[derive(Debug, Deserialize)]
struct WsQuery {
    token: Option<String>,
}

async fn ws_stream(
    State(st): State<ApiState>,
    Query(q): Query<WsQuery>,
    headers: HeaderMap,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let caller = st.authenticate(bearer(&headers).or(q.token.as_deref()))?;
    let rx = st.gateway.subscribe();
    Ok(ws.on_upgrade(move |socket| stream_events(socket, rx, st, caller)))
}

/// Parent filter; the device set is refreshed at most once a second.
struct Visibility {
    caller: AuthToken,
    own: HashSet<u64>,
    refreshed: Option<Instant>,
}

impl Visibility {
    fn allows(&mut self, gw: &Gateway, ev: &GatewayEvent) -> bool {
        if self.caller.role == Role::Provider {
            return true;
        }
        let GatewayEvent::Vitals { device_id, .. } = ev else {
            return false;
        };
        if self.refreshed.is_none_or(|t| t.elapsed() > Duration::from_secs(1)) {
            self.own = own_devices(gw, &self.caller.sub);
            self.refreshed = Some(Instant::now());
        }
        self.own.contains(device_id)
    }
}

async fn stream_events(mut socket: WebSocket, mut rx: tokio::sync::broadcast::Receiver<GatewayEvent>, st: ApiState, caller: AuthToken) {
    let mut vis = Visibility { caller, own: HashSet::new(), refreshed: None };
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(ev) => {
                    if vis.caller.exp <= st.now_s() {
                        let _ = socket.send(Message::Close(None)).await;
                        break;
                    }
                    if !vis.allows(&st.gateway, &ev) {
                        continue;
                    }
                    let text = serde_json::to_string(&ev).expect("events serialize");
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Lagged(n)) => tracing::debug!(skipped = n, "stream client lagging"),
                Err(RecvError::Closed) => break,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
