//! HTTP + JSON routes over [`Service`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use plantsam_core::Polarity;

use crate::error::{ServiceError, ServiceResult};
use crate::jobs::JobRequest;
use crate::service::{Seed, Service};
use crate::sessions::{PointPrompt, SessionStatus, UsabilityTag};
use crate::store::content_type;

type AppState = Arc<Service>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/jobs", post(submit_job).get(list_jobs))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/mask", get(job_mask))
        .route("/sessions", post(open_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/points", post(add_point))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/redo", post(redo))
        .route("/sessions/{id}/accept", post(accept))
        .route("/sessions/{id}/discard", post(discard))
        .route("/sessions/{id}/tag", post(tag))
        .route("/sessions/{id}/mask", get(session_mask))
        .route("/images/{id}", get(get_image).put(put_image))
        .with_state(service)
}

/// JSON body parsing with errors in the service's own format.
fn parse<T: DeserializeOwned>(body: &Bytes) -> ServiceResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Validation(format!("invalid request body: {e}")))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn submit_job(State(svc): State<AppState>, body: Bytes) -> ServiceResult<Response> {
    let request: JobRequest = parse(&body)?;
    let job_id = svc.submit_job(request)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))).into_response())
}

async fn list_jobs(State(svc): State<AppState>) -> Response {
    Json(svc.jobs()).into_response()
}

async fn get_job(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Response> {
    Ok(Json(svc.job(&id)?).into_response())
}

async fn job_mask(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Response> {
    Ok(png(svc.job_mask_png(&id)?))
}

#[derive(Deserialize)]
struct OpenSession {
    image_id: String,
    #[serde(default = "empty_seed")]
    seed: String,
    segmenter: Option<String>,
}

fn empty_seed() -> String {
    "empty".into()
}

async fn open_session(State(svc): State<AppState>, body: Bytes) -> ServiceResult<Response> {
    let req: OpenSession = parse(&body)?;
    let seed: Seed = req.seed.parse()?;
    let view = svc.open_session(&req.image_id, seed, req.segmenter).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

#[derive(Deserialize)]
struct SessionFilter {
    tag: Option<String>,
    status: Option<String>,
}

async fn list_sessions(State(svc): State<AppState>, Query(filter): Query<SessionFilter>) -> ServiceResult<Response> {
    let tag = filter.tag.as_deref().map(str::parse::<UsabilityTag>).transpose()?;
    let status = filter
        .status
        .as_deref()
        .map(|s| {
            serde_json::from_value::<SessionStatus>(json!(s)).map_err(|_| ServiceError::Validation(format!("unknown session status {s:?}")))
        })
        .transpose()?;
    Ok(Json(svc.list_sessions(tag, status).await).into_response())
}

async fn get_session(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Response> {
    Ok(Json(svc.session_view(&id).await?).into_response())
}

#[derive(Deserialize)]
struct PointBody {
    x: i64,
    y: i64,
    polarity: String,
}

async fn add_point(State(svc): State<AppState>, Path(id): Path<String>, body: Bytes) -> ServiceResult<Response> {
    let p: PointBody = parse(&body)?;
    let polarity: Polarity = p.polarity.parse()?;
    let coord = |v: i64| u32::try_from(v).map_err(|_| ServiceError::Validation(format!("point coordinate {v} out of bounds")));
    let prompt = PointPrompt {
        x: coord(p.x)?,
        y: coord(p.y)?,
        polarity,
    };
    let version = svc.apply_point(&id, prompt).await?;
    Ok(Json(json!({ "mask_version": version })).into_response())
}

async fn undo(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Response> {
    let version = svc.undo(&id).await?;
    Ok(Json(json!({ "mask_version": version })).into_response())
}

async fn redo(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Response> {
    let version = svc.redo(&id).await?;
    Ok(Json(json!({ "mask_version": version })).into_response())
}

async fn accept(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Response> {
    Ok(Json(svc.accept(&id).await?).into_response())
}

async fn discard(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Response> {
    Ok(Json(svc.discard(&id).await?).into_response())
}

/// Accepts `"usable"` or `{"tag": "usable"}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum TagBody {
    Bare(String),
    Object { tag: String },
}

async fn tag(State(svc): State<AppState>, Path(id): Path<String>, body: Bytes) -> ServiceResult<Response> {
    let tag = match parse::<TagBody>(&body)? {
        TagBody::Bare(t) | TagBody::Object { tag: t } => t.parse::<UsabilityTag>()?,
    };
    Ok(Json(svc.tag(&id, tag).await?).into_response())
}

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u64>,
}

async fn session_mask(State(svc): State<AppState>, Path(id): Path<String>, Query(q): Query<VersionQuery>) -> ServiceResult<Response> {
    Ok(png(svc.session_mask_png(&id, q.version).await?))
}

async fn get_image(State(svc): State<AppState>, Path(id): Path<String>) -> ServiceResult<Response> {
    let path = svc.data().image_path(&id)?;
    let bytes = tokio::fs::read(&path).await?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

async fn put_image(State(svc): State<AppState>, Path(id): Path<String>, body: Bytes) -> ServiceResult<Response> {
    svc.data().put_image(&id, &body)?;
    Ok((StatusCode::CREATED, Json(json!({ "image_id": id }))).into_response())
}
