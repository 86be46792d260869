//! JSON-over-HTTP routes for [`Service`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;

use crate::backend::BackendError;
use crate::service::{RewriteRequest, Service, ServiceError, StartRequest, SubmitRequest};
use crate::session::SessionError;

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

pub struct ApiError(StatusCode, String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Invalid(_) => StatusCode::BAD_REQUEST,
            ServiceError::EmptyCorpus => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Session(s) => match s {
                SessionError::Unrevealed { .. } | SessionError::UnknownQuestion(_) => StatusCode::BAD_REQUEST,
                SessionError::Finished
                | SessionError::AlreadySubmitted(_)
                | SessionError::NotActive { .. }
                | SessionError::RewriteNotPermitted(_)
                | SessionError::Exhausted => StatusCode::CONFLICT,
                SessionError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ServiceError::Backend(BackendError::Timeout(_)) => StatusCode::GATEWAY_TIMEOUT,
            ServiceError::Backend(_) => StatusCode::BAD_GATEWAY,
            ServiceError::Io(_) | ServiceError::Log(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type Reply<T> = Result<Json<T>, ApiError>;

/// Runs a service call off the async executor; file syncs and backend
/// queries block.
async fn blocking<T, F>(service: Arc<Service>, f: F) -> Reply<T>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map(Json)
        .map_err(ApiError::from)
}

async fn start(
    State(s): State<Arc<Service>>,
    body: Result<Json<StartRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<crate::session::SessionView>), ApiError> {
    let Json(req) = body?;
    let view = blocking(s, move |s| s.start_session(req)).await?;
    Ok((StatusCode::CREATED, view))
}

async fn current(State(s): State<Arc<Service>>, Path(id): Path<String>) -> Reply<crate::session::SessionView> {
    blocking(s, move |s| s.current(&id)).await
}

async fn reveal(State(s): State<Arc<Service>>, Path(id): Path<String>) -> Reply<crate::service::RevealResponse> {
    blocking(s, move |s| s.reveal(&id)).await
}

async fn rewrite(
    State(s): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Result<Json<RewriteRequest>, JsonRejection>,
) -> Reply<crate::session::RewriteAttempt> {
    let Json(req) = body?;
    blocking(s, move |s| s.rewrite(&id, req)).await
}

async fn submit(
    State(s): State<Arc<Service>>,
    Path(id): Path<String>,
    body: Result<Json<SubmitRequest>, JsonRejection>,
) -> Reply<crate::session::EpisodeLog> {
    let Json(req) = body?;
    blocking(s, move |s| s.submit(&id, req)).await
}

async fn log(State(s): State<Arc<Service>>, Path(id): Path<String>) -> Reply<crate::service::SessionLog> {
    blocking(s, move |s| s.log(&id)).await
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(start))
        .route("/sessions/{id}/current", get(current))
        .route("/sessions/{id}/reveal", post(reveal))
        .route("/sessions/{id}/rewrite", post(rewrite))
        .route("/sessions/{id}/submit", post(submit))
        .route("/sessions/{id}/log", get(log))
        .with_state(service)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, service: Arc<Service>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service)).await
}
