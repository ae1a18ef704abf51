//! HTTP endpoints and the browser WebSocket.

use std::path::Path;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::mpsc;
use tower_http::services::{ServeDir, ServeFile};

use crate::fanout::Fanout;
use crate::hub::HubHandle;
use crate::lease::SessionId;
use crate::log::{query_log, TelemetryLog, DEFAULT_QUERY_LIMIT};
use crate::uplink::UplinkStats;

#[derive(Clone)]
pub struct AppState {
    pub hub: HubHandle,
    pub fanout: Arc<Fanout>,
    pub log: Arc<TelemetryLog>,
    pub uplink: Arc<UplinkStats>,
    /// Served verbatim at `/api/robot`.
    pub robot: Arc<Value>,
}

pub fn router(state: AppState, static_dir: &Path) -> Router {
    Router::new()
        .route_service("/", ServeFile::new(static_dir.join("index.html")))
        .nest_service("/static", ServeDir::new(static_dir))
        .route("/api/robot", get(robot))
        .route("/api/log", get(log))
        .route("/api/status", get(status))
        .route("/ws", get(ws))
        .with_state(state)
}

async fn robot(State(s): State<AppState>) -> Json<Value> {
    Json((*s.robot).clone())
}

#[derive(Debug, Deserialize)]
struct LogQuery {
    #[serde(default)]
    since: u64,
    limit: Option<usize>,
}

async fn log(State(s): State<AppState>, Query(q): Query<LogQuery>) -> Response {
    s.log.sync().await;
    let path = s.log.path().to_path_buf();
    let limit = q.limit.unwrap_or(DEFAULT_QUERY_LIMIT);
    match tokio::task::spawn_blocking(move || query_log(&path, q.since, limit)).await {
        Ok(Ok(records)) => Json(records).into_response(),
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

async fn status(State(s): State<AppState>) -> Response {
    match s.hub.snapshot().await {
        Some(snap) => Json(json!({
            "hub": snap,
            "clients": s.fanout.client_count(),
            "telemetry_received": s.uplink.telemetry.load(std::sync::atomic::Ordering::Acquire),
            "log_appended": s.log.appended(),
        }))
        .into_response(),
        None => StatusCode::SERVICE_UNAVAILABLE.into_response(),
    }
}

async fn ws(upgrade: WebSocketUpgrade, State(s): State<AppState>) -> Response {
    upgrade.on_upgrade(move |socket| client_session(socket, s))
}

async fn client_session(socket: WebSocket, s: AppState) {
    let id = SessionId::random();
    let slot = s.fanout.add(id);
    let (control_tx, mut control_rx) = mpsc::unbounded_channel::<String>();
    s.hub.connect(id, control_tx);
    let (mut sink, mut stream) = socket.split();
    loop {
        tokio::select! {
            msg = stream.next() => match msg {
                Some(Ok(Message::Text(text))) => s.hub.client_text(id, text.as_str().to_owned()),
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            Some(text) = control_rx.recv() => {
                if sink.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            _ = slot.ready() => {
                let mut failed = false;
                for frame in slot.take() {
                    if sink.send(Message::Text(frame.as_ref().into())).await.is_err() {
                        failed = true;
                        break;
                    }
                }
                if failed {
                    break;
                }
            }
        }
    }
    s.fanout.remove(id);
    s.hub.disconnect(id);
}
