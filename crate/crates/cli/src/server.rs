//! HTTP + WebSocket front end for live number-entry sessions.
//!
//! `POST /session` creates a session (the body holds config overrides),
//! `DELETE /session/{id}` aborts it and `GET /session/{id}/ws` streams its
//! event log: the whole log is replayed on connect, then new events follow
//! as they happen. The client answers with `{"type":"response","bit":…}`.
//! Errors are sent as `{"type":"error","code":…,"msg":…}` on the socket and
//! as `{code, msg}` bodies over HTTP.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use aif_core::{Event, SessionConfig, SessionError, SessionStore, StepReport, StoreConfig};
use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;
use tower_http::services::ServeDir;

/// Broadcast to every socket when sweeping may have touched any session.
const ALL_SESSIONS: &str = "*";

const PLACEHOLDER_PAGE: &str = "<!doctype html><title>aif</title>\
<p>Session service is running. Start with <code>--static-dir</code> to serve a browser client.</p>";

#[derive(Clone, Debug, Default)]
pub struct ServeOptions {
    pub store: StoreConfig,
    pub static_dir: Option<PathBuf>,
}

pub struct AppState {
    store: Mutex<SessionStore>,
    /// Ids of sessions whose log just grew.
    changes: broadcast::Sender<String>,
}

impl AppState {
    pub fn new(cfg: StoreConfig) -> Arc<Self> {
        let (changes, _) = broadcast::channel(256);
        Arc::new(Self {
            store: Mutex::new(SessionStore::new(cfg)),
            changes,
        })
    }

    fn store(&self) -> std::sync::MutexGuard<'_, SessionStore> {
        self.store.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn notify(&self, id: &str) {
        // no subscribers is fine
        let _ = self.changes.send(id.to_string());
    }
}

struct ApiError(SessionError);

fn status_of(e: &SessionError) -> StatusCode {
    match e {
        SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
        SessionError::WrongPhase(_) => StatusCode::CONFLICT,
        SessionError::Gone => StatusCode::GONE,
        SessionError::Capacity(_) => StatusCode::SERVICE_UNAVAILABLE,
        SessionError::InvalidConfig(_) => StatusCode::BAD_REQUEST,
        SessionError::Engine(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.0.code(), "msg": self.0.to_string() });
        (status_of(&self.0), Json(body)).into_response()
    }
}

/// Builds the router around shared state.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}", delete(delete_session))
        .route("/session/{id}/ws", get(session_socket))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    }
}

/// Serves until the listener fails, sweeping idle sessions in the background.
pub async fn serve(listener: tokio::net::TcpListener, opts: ServeOptions) -> std::io::Result<()> {
    let state = AppState::new(opts.store.clone());
    let period = Duration::from_secs((opts.store.ttl_secs / 4).max(1));
    let sweeper = Arc::clone(&state);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            sweeper.store().sweep(Instant::now());
            sweeper.notify(ALL_SESSIONS);
        }
    });
    axum::serve(listener, router(state, opts.static_dir)).await
}

/// Runs store work off the async threads; planning can take a while.
async fn blocking<T, F>(state: &Arc<AppState>, f: F) -> Result<T, SessionError>
where
    T: Send + 'static,
    F: FnOnce(&mut SessionStore, Instant) -> Result<T, SessionError> + Send + 'static,
{
    let state = Arc::clone(state);
    tokio::task::spawn_blocking(move || f(&mut state.store(), Instant::now()))
        .await
        .unwrap_or_else(|e| Err(SessionError::InvalidConfig(format!("worker failed: {e}"))))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let config: SessionConfig = if body.iter().all(u8::is_ascii_whitespace) {
        SessionConfig::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError(SessionError::InvalidConfig(e.to_string())))?
    };
    let (id, report): (String, StepReport) = blocking(&state, move |store, now| store.create(config, now))
        .await
        .map_err(ApiError)?;
    Ok(Json(json!({ "id": id, "next": report.next, "belief": report.belief })))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let target = id.clone();
    blocking(&state, move |store, now| store.abort(&target, "closed by client", now))
        .await
        .map_err(ApiError)?;
    state.notify(&id);
    Ok(StatusCode::NO_CONTENT)
}

async fn session_socket(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    state.store().events(&id, Instant::now()).map_err(ApiError)?;
    Ok(ws.on_upgrade(move |socket| stream_session(socket, state, id)))
}

/// Client to server messages.
#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ClientMessage {
    Response {
        bit: Bit,
    },
    Abort {
        #[serde(default)]
        reason: Option<String>,
    },
}

/// `0`/`1` or `"below"`/`"above"`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Bit {
    Number(u8),
    Word(BitWord),
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BitWord {
    Below,
    Above,
}

impl Bit {
    fn value(&self) -> Option<u8> {
        match self {
            Bit::Number(b @ (0 | 1)) => Some(*b),
            Bit::Number(_) => None,
            Bit::Word(BitWord::Below) => Some(0),
            Bit::Word(BitWord::Above) => Some(1),
        }
    }
}

fn error_message(code: &str, msg: impl std::fmt::Display) -> Message {
    Message::Text(
        json!({ "type": "error", "code": code, "msg": msg.to_string() })
            .to_string()
            .into(),
    )
}

/// Sends every event past `cursor`. Returns false once the socket is gone.
async fn flush(socket: &mut WebSocket, state: &AppState, id: &str, cursor: &mut usize) -> bool {
    let snapshot = state.store().events(id, Instant::now());
    let events: Vec<Event> = match snapshot {
        Ok(events) => events,
        Err(e) => return socket.send(error_message(e.code(), &e)).await.is_ok(),
    };
    for event in events.iter().skip(*cursor) {
        let text = serde_json::to_string(event).expect("events serialize");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return false;
        }
        *cursor += 1;
    }
    true
}

async fn handle_text(socket: &mut WebSocket, state: &Arc<AppState>, id: &str, text: &str) -> bool {
    let outcome = match serde_json::from_str::<ClientMessage>(text) {
        Err(e) => return socket.send(error_message("bad_message", e)).await.is_ok(),
        Ok(ClientMessage::Response { bit }) => match bit.value() {
            None => {
                return socket
                    .send(error_message("bad_message", "bit must be 0, 1, below or above"))
                    .await
                    .is_ok()
            }
            Some(bit) => {
                let target = id.to_string();
                blocking(state, move |store, now| store.respond(&target, bit, now).map(drop)).await
            }
        },
        Ok(ClientMessage::Abort { reason }) => {
            let target = id.to_string();
            let reason = reason.unwrap_or_else(|| "closed by client".into());
            blocking(state, move |store, now| store.abort(&target, &reason, now)).await
        }
    };
    match outcome {
        Ok(()) => {
            state.notify(id);
            true
        }
        Err(e) => socket.send(error_message(e.code(), &e)).await.is_ok(),
    }
}

async fn stream_session(mut socket: WebSocket, state: Arc<AppState>, id: String) {
    let mut changes = state.changes.subscribe();
    let mut cursor = 0;
    if !flush(&mut socket, &state, &id, &mut cursor).await {
        return;
    }
    loop {
        let alive = tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    handle_text(&mut socket, &state, &id, text.as_str()).await
                        && flush(&mut socket, &state, &id, &mut cursor).await
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => false,
                Some(Ok(_)) => true,
            },
            changed = changes.recv() => match changed {
                Ok(sid) if sid == id || sid == ALL_SESSIONS => flush(&mut socket, &state, &id, &mut cursor).await,
                Ok(_) => true,
                Err(broadcast::error::RecvError::Lagged(_)) => flush(&mut socket, &state, &id, &mut cursor).await,
                Err(broadcast::error::RecvError::Closed) => false,
            },
        };
        if !alive {
            break;
        }
    }
}
