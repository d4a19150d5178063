//! JSON HTTP API over a [`Pipeline`]. Handlers run pipeline work on the
//! blocking pool, so slow backends never stall the reactor.

use std::path::Path;
use std::sync::Arc;

use axum::extract::multipart::Multipart;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::orchestrator::{LogRecord, Pipeline, PipelineError, RunManifest};
use crate::scenario::{FeedbackNote, ScenarioBlueprint, TargetSection};

/// Largest accepted upload.
pub const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        Self {
            status: StatusCode::from_u16(e.kind().http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request("InvalidInput", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(
    p: &Arc<Pipeline>,
    f: impl FnOnce(&Pipeline) -> Result<T, PipelineError> + Send + 'static,
) -> ApiResult<T> {
    let p = p.clone();
    match tokio::task::spawn_blocking(move || f(&p)).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "Internal".into(),
            message: e.to_string(),
        }),
    }
}

/// A manifest plus the current blueprint, enough to render a run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunView {
    #[serde(flatten)]
    pub manifest: RunManifest,
    pub blueprint: Option<ScenarioBlueprint>,
}

fn view(p: &Pipeline, manifest: RunManifest) -> RunView {
    let blueprint = p.blueprint(&manifest.run_id).ok();
    RunView { manifest, blueprint }
}

#[derive(Deserialize)]
struct StartBody {
    goal: String,
}

#[derive(Deserialize)]
struct FeedbackBody {
    text: String,
    #[serde(alias = "target_section")]
    section: TargetSection,
    #[serde(default)]
    author: Option<String>,
}

#[derive(Deserialize)]
struct QueryBody {
    log_id: String,
    question: String,
}

async fn create_run(State(p): State<Arc<Pipeline>>, body: Result<Json<StartBody>, JsonRejection>) -> ApiResult<Response> {
    let Json(body) = body?;
    let v = blocking(&p, move |p| p.start_run(&body.goal).map(|m| view(p, m))).await?;
    Ok((StatusCode::CREATED, Json(v)).into_response())
}

async fn list_runs(State(p): State<Arc<Pipeline>>) -> ApiResult<Json<Vec<RunManifest>>> {
    blocking(&p, |p| p.list()).await.map(Json)
}

async fn get_run(State(p): State<Arc<Pipeline>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RunView>> {
    blocking(&p, move |p| p.load(&id).map(|m| view(p, m))).await.map(Json)
}

async fn feedback(
    State(p): State<Arc<Pipeline>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<FeedbackBody>, JsonRejection>,
) -> ApiResult<Json<RunView>> {
    let Json(body) = body?;
    let mut note = FeedbackNote::new(body.text, body.section);
    if let Some(a) = body.author {
        note.author = a;
    }
    blocking(&p, move |p| p.submit_feedback(&id, note).map(|m| view(p, m))).await.map(Json)
}

async fn approve(State(p): State<Arc<Pipeline>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RunView>> {
    blocking(&p, move |p| p.approve(&id).map(|m| view(p, m))).await.map(Json)
}

async fn read_upload(mut form: Multipart) -> ApiResult<Vec<u8>> {
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request("InvalidInput", e.body_text()))?
    {
        if field.name() == Some("file") || field.file_name().is_some() {
            let bytes = field
                .bytes()
                .await
                .map_err(|e| ApiError::bad_request("InvalidInput", e.body_text()))?;
            return Ok(bytes.to_vec());
        }
    }
    Err(ApiError::bad_request("InvalidInput", "multipart body has no file field"))
}

async fn upload_run_log(
    State(p): State<Arc<Pipeline>>,
    UrlPath(id): UrlPath<String>,
    form: Multipart,
) -> ApiResult<Json<RunView>> {
    let bytes = read_upload(form).await?;
    blocking(&p, move |p| p.ingest_flight_log(&id, &bytes).map(|m| view(p, m))).await.map(Json)
}

async fn upload_log(State(p): State<Arc<Pipeline>>, form: Multipart) -> ApiResult<Response> {
    let bytes = read_upload(form).await?;
    let rec = blocking(&p, move |p| p.ingest_log(&bytes)).await?;
    Ok((StatusCode::CREATED, Json(rec)).into_response())
}

async fn list_logs(State(p): State<Arc<Pipeline>>) -> ApiResult<Json<Vec<LogRecord>>> {
    blocking(&p, |p| p.list_logs()).await.map(Json)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => "application/json",
        Some("md") => "text/markdown; charset=utf-8",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("csv") => "text/csv",
        _ => "application/octet-stream",
    }
}

fn file_response(path: &Path) -> ApiResult<Response> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Io(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, content_type(path))], bytes).into_response())
}

async fn artifact(
    State(p): State<Arc<Pipeline>>,
    UrlPath((id, name)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let path = blocking(&p, move |p| p.artifact_file(&id, &name)).await?;
    file_response(&path)
}

async fn plot(State(p): State<Arc<Pipeline>>, UrlPath(rel): UrlPath<String>) -> ApiResult<Response> {
    let is_image = rel.ends_with(".svg") || rel.ends_with(".png");
    let path = is_image
        .then(|| p.store().resolve(&rel))
        .flatten()
        .ok_or_else(|| PipelineError::UnknownArtifact(rel.clone()))?;
    file_response(&path)
}

async fn query(State(p): State<Arc<Pipeline>>, body: Result<Json<QueryBody>, JsonRejection>) -> ApiResult<Json<serde_json::Value>> {
    let Json(body) = body?;
    let out = blocking(&p, move |p| p.query_analytics(&body.log_id, &body.question)).await?;
    Ok(Json(serde_json::to_value(out).map_err(|e| PipelineError::Io(e.to_string()))?))
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "NotFound".into(),
        message: "no such endpoint".into(),
    }
}

pub fn router(pipeline: Arc<Pipeline>) -> Router {
    Router::new()
        .route("/api/runs", post(create_run).get(list_runs))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/feedback", post(feedback))
        .route("/api/runs/{id}/approve", post(approve))
        .route("/api/runs/{id}/log", post(upload_run_log))
        .route("/api/runs/{id}/artifacts/{*name}", get(artifact))
        .route("/api/analytics/query", post(query))
        .route("/api/logs", get(list_logs).post(upload_log))
        .route("/api/plots/{*path}", get(plot))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(pipeline)
}

/// Serves until the process is stopped.
pub async fn serve(pipeline: Arc<Pipeline>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(pipeline)).await
}
