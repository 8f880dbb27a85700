//! HTTP front end for [`SessionStore`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use serde::{Deserialize, Serialize};
use serde_json::json;
use teamforge_core::session::CreateRequest;
use teamforge_core::{Choice, Error, SessionStore};

type Store = Arc<SessionStore>;

/// Error body: `{error_code, message, field?}`.
#[derive(Debug, Serialize)]
struct ErrorBody {
    error_code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'static str>,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(err: &Error) -> StatusCode {
    match err {
        Error::UnknownSession(_) => StatusCode::NOT_FOUND,
        Error::WrongPhase { .. }
        | Error::StaleNonce(_)
        | Error::SessionTerminal
        | Error::SessionNotTerminal => StatusCode::CONFLICT,
        Error::Io(_) | Error::CorruptLog(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            error!("{}", self.0);
        }
        let body = ErrorBody {
            error_code: self.0.code(),
            message: self.0.to_string(),
            field: self.0.field(),
        };
        (status, Json(body)).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError(Error::MalformedDocument(e.to_string())))
}

/// Runs a store operation off the async workers; evolution can take a while.
async fn blocking<T: Send + 'static>(
    store: &Store,
    op: impl FnOnce(&SessionStore) -> teamforge_core::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || op(&store))
        .await
        .map_err(|e| ApiError(Error::Io(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn create(State(store): State<Store>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateRequest = parse_body(&body)?;
    let id = blocking(&store, move |s| s.create_from_request(req)).await?;
    info!("session {id} created");
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))).into_response())
}

async fn evolve(State(store): State<Store>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let summary = blocking(&store, move |s| s.run_evolution(&id)).await?;
    Ok(Json(summary).into_response())
}

async fn round(State(store): State<Store>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let presentation = blocking(&store, move |s| s.get_round(&id)).await?;
    Ok(Json(presentation).into_response())
}

#[derive(Deserialize)]
struct ChoiceBody {
    nonce: String,
    choice: Choice,
}

async fn choice(
    State(store): State<Store>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let ChoiceBody { nonce, choice } = parse_body(&body)?;
    let outcome = blocking(&store, move |s| s.submit_choice(&id, &nonce, choice)).await?;
    Ok(Json(outcome).into_response())
}

async fn recommendation(
    State(store): State<Store>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let rec = blocking(&store, move |s| s.get_recommendation(&id)).await?;
    Ok(Json(rec).into_response())
}

async fn archive(State(store): State<Store>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let archive = blocking(&store, move |s| s.archive(&id)).await?;
    Ok(Json(json!({ "entries": archive.entries() })).into_response())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(store: Store) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}/evolve", post(evolve))
        .route("/sessions/{id}/round", get(round))
        .route("/sessions/{id}/choice", post(choice))
        .route("/sessions/{id}/recommendation", get(recommendation))
        .route("/sessions/{id}/archive", get(archive))
        .with_state(store)
}

pub async fn serve(addr: SocketAddr, store: Store) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
