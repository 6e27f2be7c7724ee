//! HTTP and websocket front end for the session actors.

use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

use crate::session::actor::{ManagerError, SessionInput, SessionManager};
use crate::session::protocol::{ClientMsg, ServerMsg};
use crate::session::store::{rounds_csv, trajectories_jsonl};
use crate::session::Protocol;

#[derive(Clone)]
struct App {
    manager: Arc<SessionManager>,
    next_conn: Arc<AtomicU64>,
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    protocol: Protocol,
    participant_id: String,
    seed: Option<u64>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<ManagerError> for ApiError {
    fn from(e: ManagerError) -> Self {
        let code = match e {
            ManagerError::NotFound(_) => StatusCode::NOT_FOUND,
            ManagerError::Exists(_) => StatusCode::CONFLICT,
            ManagerError::Session(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ManagerError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

pub fn router(manager: Arc<SessionManager>, static_dir: Option<PathBuf>) -> Router {
    let app = App { manager, next_conn: Arc::new(AtomicU64::new(1)) };
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(session_record))
        .route("/export/rounds.csv", get(export_rounds))
        .route("/export/trajectories.jsonl", get(export_trajectories))
        .route("/ws", get(ws_upgrade))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until `shutdown` resolves, then stops every session.
pub async fn serve(listener: TcpListener, manager: Arc<SessionManager>, static_dir: Option<PathBuf>, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    let app = router(Arc::clone(&manager), static_dir);
    let m = Arc::clone(&manager);
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            shutdown.await;
            // Open websockets keep the server alive until their sessions stop.
            m.shutdown().await;
        })
        .await;
    manager.shutdown().await;
    result
}

async fn health(State(app): State<App>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "live_sessions": app.manager.live_count(),
        "registry": app.manager.rt.registry.summary(),
    }))
}

async fn create(State(app): State<App>, Json(req): Json<CreateSession>) -> Result<impl IntoResponse, ApiError> {
    if req.participant_id.trim().is_empty() {
        return Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, "participant_id is empty".into()));
    }
    let seed = req.seed.unwrap_or_else(|| bslab_core::rng::derive_seed(0, &[fnv(&req.participant_id)]));
    let session = app.manager.create(req.protocol, &req.participant_id, seed)?;
    Ok((StatusCode::CREATED, Json(session)))
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

async fn session_record(State(app): State<App>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let handle = app.manager.get(&id)?;
    let record = handle.record().await.ok_or_else(|| ApiError(StatusCode::SERVICE_UNAVAILABLE, "session stopped".into()))?;
    Ok(Json(record))
}

async fn export_rounds(State(app): State<App>) -> Result<impl IntoResponse, ApiError> {
    let records = app.manager.rt.store.load_all().map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let body = rounds_csv(&records).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], body))
}

async fn export_trajectories(State(app): State<App>) -> Result<impl IntoResponse, ApiError> {
    let records = app.manager.rt.store.load_all().map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], trajectories_jsonl(&records)))
}

async fn ws_upgrade(State(app): State<App>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| connection(app, socket))
}

async fn connection(app: App, socket: WebSocket) {
    let conn = app.next_conn.fetch_add(1, Ordering::Relaxed);
    let (mut sink, mut stream) = socket.split();
    // Session messages arrive on `session_rx`; its sender moves into the
    // actor on join, so the writer (and the socket) end when the session
    // stops or another connection takes it over.
    let (session_tx, mut session_rx) = mpsc::unbounded_channel::<ServerMsg>();
    let (local_tx, mut local_rx) = mpsc::unbounded_channel::<ServerMsg>();
    let mut session_tx = Some(session_tx);
    let mut writer = tokio::spawn(async move {
        loop {
            let msg = tokio::select! {
                m = session_rx.recv() => match m {
                    Some(m) => m,
                    None => break,
                },
                Some(m) = local_rx.recv() => m,
            };
            let text = serde_json::to_string(&msg).expect("server messages serialize");
            if sink.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
        let _ = sink.close().await;
    });

    let mut session = None;
    loop {
        let frame = tokio::select! {
            _ = &mut writer => break,
            f = stream.next() => f,
        };
        let text = match frame {
            Some(Ok(Message::Text(t))) => t,
            Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            Some(Ok(_)) => continue,
        };
        let msg: ClientMsg = match serde_json::from_str(text.as_str()) {
            Ok(m) => m,
            Err(e) => {
                let _ = local_tx.send(ServerMsg::Error { message: format!("bad message: {e}") });
                continue;
            }
        };
        match (&session, msg) {
            (None, ClientMsg::Join { session_id }) => match app.manager.get(&session_id) {
                Ok(h) => {
                    h.send(SessionInput::Attach(conn, session_tx.take().expect("joined once")));
                    session = Some(h);
                }
                Err(e) => {
                    let _ = local_tx.send(ServerMsg::Error { message: e.to_string() });
                }
            },
            (None, _) => {
                let _ = local_tx.send(ServerMsg::Error { message: "join a session first".into() });
            }
            (Some(h), msg) => {
                if !h.send(SessionInput::Client(msg)) {
                    break;
                }
            }
        }
    }
    if let Some(h) = session {
        h.send(SessionInput::Detach(conn));
    }
    writer.abort();
}
