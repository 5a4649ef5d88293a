//! HTTP front end: `POST /classify`, `POST /turn`, `GET /health`.
//!
//! Turns on one conversation are serialized through a per-conversation
//! async mutex; different conversations proceed in parallel. Classifier and
//! reply calls are blocking and run on the blocking pool.

use std::collections::HashMap;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::classifier::{IntentClassifier, ReplyGenerator};
use crate::config::{AppConfig, Built};
use crate::corpus::Intent;
use crate::dialogue::{lesson_context, DialogueEngine, DialogueError, DialogueState, NavigationKind, Phase, TurnOutcome, PHASE_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    #[serde(default)]
    pub conversation_id: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub intent: Intent,
    pub confidence: Option<f64>,
    pub latency_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRequest {
    pub conversation_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnType {
    Reply,
    Navigation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResponse {
    #[serde(rename = "type")]
    pub kind: TurnType,
    pub text: Option<String>,
    pub navigation_kind: Option<NavigationKind>,
    /// Current phase; a completed lesson reports the last phase.
    pub phase_index: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub backend: String,
    pub model_format_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

type Session = Arc<tokio::sync::Mutex<DialogueState>>;

/// Shared service state.
pub struct AppState {
    classifier: Arc<dyn IntentClassifier>,
    replies: Arc<dyn ReplyGenerator>,
    engine: Arc<DialogueEngine>,
    sessions: Mutex<HashMap<String, Session>>,
    shutting_down: AtomicBool,
    label: String,
    model_format: Option<String>,
    snapshot_path: Option<PathBuf>,
}

impl AppState {
    pub fn new(built: Built, engine: DialogueEngine) -> Self {
        AppState {
            label: built.classifier.label(),
            classifier: built.classifier,
            replies: built.replies,
            engine: Arc::new(engine),
            sessions: Mutex::new(HashMap::new()),
            shutting_down: AtomicBool::new(false),
            model_format: built.model_format,
            snapshot_path: None,
        }
    }

    pub fn from_config(config: &AppConfig) -> anyhow::Result<Self> {
        let built = config.backend.build_classifier()?;
        let engine = DialogueEngine::new(config.scripts()?, config.policy)?;
        let mut state = AppState::new(built, engine);
        if let Some(path) = &config.service.snapshot_path {
            state = state.with_snapshot(path)?;
        }
        Ok(state)
    }

    /// Restores sessions from `path` if it exists and writes them back there
    /// on shutdown.
    pub fn with_snapshot(mut self, path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            let states: Vec<DialogueState> = serde_json::from_str(&text)?;
            let mut map = self.sessions.lock().expect("session map");
            for s in states {
                map.insert(s.conversation_id.clone(), Arc::new(tokio::sync::Mutex::new(s)));
            }
            log::info!("restored {} sessions from {}", map.len(), path.display());
        }
        self.snapshot_path = Some(path.to_path_buf());
        Ok(self)
    }

    fn session(&self, conversation_id: &str) -> Session {
        let mut map = self.sessions.lock().expect("session map");
        map.entry(conversation_id.to_string())
            .or_insert_with(|| Arc::new(tokio::sync::Mutex::new(self.engine.start(conversation_id))))
            .clone()
    }

    /// Current state of one conversation, waiting for any in-flight turn.
    pub async fn conversation(&self, conversation_id: &str) -> Option<DialogueState> {
        let s = self.sessions.lock().expect("session map").get(conversation_id).cloned()?;
        let guard = s.lock().await;
        Some(guard.clone())
    }

    /// All sessions, sorted by conversation id.
    pub async fn snapshot(&self) -> Vec<DialogueState> {
        let sessions: Vec<Session> = self.sessions.lock().expect("session map").values().cloned().collect();
        let mut out = Vec::with_capacity(sessions.len());
        for s in sessions {
            out.push(s.lock().await.clone());
        }
        out.sort_by(|a, b| a.conversation_id.cmp(&b.conversation_id));
        out
    }

    pub fn begin_shutdown(&self) {
        self.shutting_down.store(true, Ordering::SeqCst);
    }

    async fn write_snapshot(&self) -> std::io::Result<()> {
        let Some(path) = &self.snapshot_path else { return Ok(()) };
        let states = self.snapshot().await;
        let json = serde_json::to_string_pretty(&states).map_err(std::io::Error::other)?;
        std::fs::write(path, json)?;
        log::info!("wrote {} sessions to {}", states.len(), path.display());
        Ok(())
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

#[allow(clippy::result_large_err)]
fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, Response> {
    payload
        .map(|Json(t)| t)
        .map_err(|e| error(StatusCode::BAD_REQUEST, e.body_text()))
}

async fn reject_during_shutdown(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if state.shutting_down.load(Ordering::SeqCst) {
        return error(StatusCode::SERVICE_UNAVAILABLE, "shutting down");
    }
    next.run(request).await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        backend: state.label.clone(),
        model_format_version: state.model_format.clone(),
    })
}

async fn classify(State(state): State<Arc<AppState>>, payload: Result<Json<ClassifyRequest>, JsonRejection>) -> Response {
    let req = match body(payload) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "text is empty");
    }
    // Context follows the conversation's phase when it is idle; otherwise phase 1.
    let phase = req
        .conversation_id
        .as_deref()
        .and_then(|id| state.sessions.lock().expect("session map").get(id).cloned())
        .and_then(|s| s.try_lock().ok().and_then(|g| g.phase_index()))
        .unwrap_or(1);
    let context = lesson_context(state.engine.scripts(), phase);
    let classifier = state.classifier.clone();
    let result = tokio::task::spawn_blocking(move || classifier.classify(&context, &req.text)).await;
    match result {
        Ok(Ok(p)) => Json(ClassifyResponse {
            intent: p.intent,
            confidence: p.confidence,
            latency_seconds: p.latency_seconds.max(1e-9),
        })
        .into_response(),
        Ok(Err(e)) => {
            log::warn!("classify failed: {e}");
            error(StatusCode::BAD_GATEWAY, format!("backend failure: {e}"))
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn turn(State(state): State<Arc<AppState>>, payload: Result<Json<TurnRequest>, JsonRejection>) -> Response {
    let req = match body(payload) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.conversation_id.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "conversation_id is empty");
    }
    if req.text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "text is empty");
    }
    let session = state.session(&req.conversation_id);
    // The guard moves into the blocking task so the state update lands even
    // if the client disconnects mid-turn.
    let mut guard = session.lock_owned().await;
    let engine = state.engine.clone();
    let classifier = state.classifier.clone();
    let replies = state.replies.clone();
    let result = tokio::task::spawn_blocking(move || {
        let (next, outcome) = engine.handle_turn(&guard, &req.text, classifier.as_ref(), replies.as_ref())?;
        *guard = next;
        let phase_index = match guard.phase {
            Phase::Active(p) => p,
            Phase::Completed => PHASE_COUNT as u8,
        };
        Ok::<_, DialogueError>((outcome, phase_index))
    })
    .await;
    match result {
        Ok(Ok((outcome, phase_index))) => {
            let resp = match outcome {
                TurnOutcome::Reply { text } => TurnResponse {
                    kind: TurnType::Reply,
                    text: Some(text),
                    navigation_kind: None,
                    phase_index,
                },
                TurnOutcome::Navigation { kind } => TurnResponse {
                    kind: TurnType::Navigation,
                    text: None,
                    navigation_kind: Some(kind),
                    phase_index,
                },
            };
            Json(resp).into_response()
        }
        Ok(Err(DialogueError::ConversationCompleted)) => {
            error(StatusCode::UNPROCESSABLE_ENTITY, "conversation is already complete")
        }
        Ok(Err(DialogueError::Reply(e))) => {
            log::warn!("reply generation failed: {e}");
            error(StatusCode::BAD_GATEWAY, format!("backend failure: {e}"))
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/classify", post(classify))
        .route("/turn", post(turn))
        .layer(middleware::from_fn_with_state(state.clone(), reject_during_shutdown))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests
/// (rejecting new ones with 503) and writes the session snapshot.
pub async fn serve_with_shutdown<F>(listener: tokio::net::TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    let flag = state.clone();
    let app = router(state.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            shutdown.await;
            log::info!("shutdown requested; finishing in-flight requests");
            flag.begin_shutdown();
        })
        .await?;
    state.write_snapshot().await
}

async fn ctrl_c() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
}

/// Runs the service from configuration until SIGINT/SIGTERM.
pub fn serve(config: &AppConfig) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(config)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.service.bind).await?;
        log::info!(
            "serving backend {:?} on http://{}",
            state.label,
            listener.local_addr()?
        );
        serve_with_shutdown(listener, state, ctrl_c()).await?;
        Ok(())
    })
}
