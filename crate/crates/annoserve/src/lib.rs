//! HTTP API over an [`AnnotationSession`].
//!
//! | method | path | response |
//! |---|---|---|
//! | GET | `/api/session` | [`SessionState`](weakanno::session::SessionState), 404 once closed |
//! | GET | `/api/requests/next` | [`AnnotatorRequest`], 204 when every cluster is labeled |
//! | POST | `/api/requests/{id}/label` | `{"label_id": n}` → [`LabelRecord`]; 404 unknown id, 409 duplicate, 422 unknown label |
//! | GET | `/api/clusters/{id}` | [`ClusterSummary`] |
//! | GET | `/assets/*` | files of the assets directory |

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::watch;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;
use weakanno::ingest::{ClipSpan, LabelId};
use weakanno::session::{AnnotationSession, AnnotatorRequest, LabelRecord, SubmitError};

pub const DEFAULT_PORT: u16 = 8787;

/// Shared handle to the session behind the server. Every mutation takes the
/// lock, so submissions are applied one at a time.
#[derive(Clone)]
pub struct SessionHandle {
    session: Arc<Mutex<AnnotationSession>>,
    complete: watch::Sender<bool>,
}

impl SessionHandle {
    pub fn new(session: AnnotationSession) -> Self {
        let (complete, _) = watch::channel(session.is_complete());
        SessionHandle {
            session: Arc::new(Mutex::new(session)),
            complete,
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, AnnotationSession> {
        self.session.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn is_complete(&self) -> bool {
        self.lock().is_complete()
    }

    /// Resolves once every cluster has a label.
    pub async fn wait_complete(&self) {
        let mut rx = self.complete.subscribe();
        let _ = rx.wait_for(|done| *done).await;
    }

    fn submit(&self, request_id: &str, label: LabelId) -> Result<LabelRecord, SubmitError> {
        let mut session = self.lock();
        let record = session.submit(request_id, label)?;
        if session.is_complete() {
            self.complete.send_replace(true);
        }
        Ok(record)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelBody {
    pub label_id: LabelId,
}

/// Public view of one cluster. Never carries ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub member_count: usize,
    pub clip_index: usize,
    pub clip_span: ClipSpan,
    pub request_id: String,
    pub labeled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ApiError { error: message.into() })).into_response()
}

fn closed() -> Response {
    error(StatusCode::NOT_FOUND, "no open session")
}

async fn get_session(State(h): State<SessionHandle>) -> Response {
    let session = h.lock();
    if session.is_closed() {
        return closed();
    }
    Json(session.state()).into_response()
}

async fn next_request(State(h): State<SessionHandle>) -> Response {
    let session = h.lock();
    if session.is_closed() {
        return closed();
    }
    match session.next_request() {
        Some(r) => Json::<AnnotatorRequest>(r.clone()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn submit_label(State(h): State<SessionHandle>, Path(id): Path<String>, Json(body): Json<LabelBody>) -> Response {
    match h.submit(&id, body.label_id) {
        Ok(record) => Json(record).into_response(),
        Err(err) => {
            let status = match err {
                SubmitError::Closed | SubmitError::UnknownRequest(_) => StatusCode::NOT_FOUND,
                SubmitError::Duplicate(_) => StatusCode::CONFLICT,
                SubmitError::UnknownLabel { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                SubmitError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
            };
            error(status, err.to_string())
        }
    }
}

async fn cluster(State(h): State<SessionHandle>, Path(id): Path<usize>) -> Response {
    let session = h.lock();
    if session.is_closed() {
        return closed();
    }
    let Some(r) = session.request_for_cluster(id) else {
        return error(StatusCode::NOT_FOUND, format!("no cluster {id}"));
    };
    let labeled = session.records().any(|rec| rec.cluster_id == id);
    Json(ClusterSummary {
        cluster_id: r.cluster_id,
        member_count: r.member_count,
        clip_index: r.clip_index,
        clip_span: r.clip_span,
        request_id: r.request_id.clone(),
        labeled,
    })
    .into_response()
}

/// Builds the API router; `/assets` is served from `assets` when given.
pub fn router(handle: SessionHandle, assets: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/requests/next", get(next_request))
        .route("/api/requests/{id}/label", post(submit_label))
        .route("/api/clusters/{id}", get(cluster))
        .with_state(handle);
    if let Some(dir) = assets {
        app = app.nest_service("/assets", ServeDir::new(dir));
    }
    app.layer(CorsLayer::permissive())
}

/// Binds `addr`, serves until every cluster is labeled, then shuts down.
pub async fn serve_until_complete(handle: SessionHandle, addr: SocketAddr, assets: Option<PathBuf>) -> io::Result<()> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|err| io::Error::new(err.kind(), format!("cannot listen on {addr}: {err}")))?;
    serve_on(listener, handle, assets).await
}

pub async fn serve_on(listener: TcpListener, handle: SessionHandle, assets: Option<PathBuf>) -> io::Result<()> {
    let done = handle.clone();
    axum::serve(listener, router(handle, assets))
        .with_graceful_shutdown(async move { done.wait_complete().await })
        .await
}

/// Blocking wrapper around [`serve_until_complete`] on a fresh runtime.
pub fn run_blocking(handle: SessionHandle, addr: SocketAddr, assets: Option<PathBuf>) -> io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve_until_complete(handle, addr, assets))
}
