//! HTTP front of the mock aggregation server.
//!
//! - `POST /api/sync/push`: compressed delta batch; `200` with a
//!   [`PushAck`], or `400`/`409`/`422`/`500` with `{"error": ...}`
//! - `GET /api/sync/cursor`: `{"cursor": n}`
//! - `GET /api/sync/checksum`: [`Checksum`] of the whole state

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use neoward_core::sync::{AggregationServer, PushAck};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CursorBody {
    pub cursor: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checksum {
    pub digest: String,
    pub cursor: u64,
    pub entities: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn router(server: Arc<AggregationServer>) -> Router {
    Router::new()
        .route("/api/sync/push", post(push))
        .route("/api/sync/cursor", get(cursor))
        .route("/api/sync/checksum", get(checksum))
        .layer(axum::extract::DefaultBodyLimit::max(neoward_core::sync::MAX_BODY))
        .with_state(server)
}

async fn push(State(server): State<Arc<AggregationServer>>, body: Bytes) -> Response {
    let result = tokio::task::spawn_blocking(move || server.push(&body)).await;
    match result {
        Ok(Ok(ack)) => Json::<PushAck>(ack).into_response(),
        Ok(Err(e)) => {
            let status = StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, Json(ErrorBody { error: e.to_string() })).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(ErrorBody { error: e.to_string() })).into_response(),
    }
}

async fn cursor(State(server): State<Arc<AggregationServer>>) -> impl IntoResponse {
    Json(CursorBody { cursor: server.cursor() })
}

async fn checksum(State(server): State<Arc<AggregationServer>>) -> impl IntoResponse {
    Json(Checksum { digest: server.digest(), cursor: server.cursor(), entities: server.entity_count() })
}
