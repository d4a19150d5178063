use std::sync::Arc;

use ast_core::analytics::Sensor;
use ast_core::fixtures;
use ast_core::flightlog::write_ulog;
use ast_core::orchestrator::{Pipeline, PipelineConfig};
use ast_core::server::router;
use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const BOUNDARY: &str = "ast-test-boundary";

fn app(dir: &std::path::Path) -> Router {
    router(Arc::new(Pipeline::new(PipelineConfig::mock(dir)).unwrap()))
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>, String) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body, ctype)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let (status, bytes, _) = send(app, req).await;
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

fn multipart(uri: &str, bytes: &[u8]) -> Request<Body> {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"flight.ulg\"\r\nContent-Type: application/octet-stream\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    Request::builder()
        .method("POST")
        .uri(uri)
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

fn error_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap()
}

#[tokio::test]
async fn review_then_ingest_over_http() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());

    let (s, run) = call(&app, "POST", "/api/runs", Some(json!({"goal": "city surveillance"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(run["stage"], "awaiting_approval");
    assert_eq!(run["blueprint"]["use_case"], "City surveillance");
    let id = run["run_id"].as_str().unwrap().to_string();

    let (s, v) = call(
        &app,
        "POST",
        &format!("/api/runs/{id}/feedback"),
        Some(json!({"text": "increase the mission complexity", "section": "test_properties"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["revision_count"], 1);

    let (s, v) = call(&app, "POST", &format!("/api/runs/{id}/approve"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["stage"], "scripts_validated");
    let (s, v) = call(&app, "POST", &format!("/api/runs/{id}/approve"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(error_code(&v), "WrongStage");

    let (s, body, ctype) = send(
        &app,
        Request::get(format!("/api/runs/{id}/artifacts/mission_plan")).body(Body::empty()).unwrap(),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype, "application/json");
    assert!(String::from_utf8(body).unwrap().contains("40.7128"));

    let (s, body, _) = send(&app, multipart(&format!("/api/runs/{id}/log"), b"garbage")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&serde_json::from_slice(&body).unwrap()), "BadMagic");

    let log = write_ulog(&fixtures::synthetic_log(Some(Sensor::Barometer))).unwrap();
    let (s, body, _) = send(&app, multipart(&format!("/api/runs/{id}/log"), &log)).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["stage"], "evaluated");

    let (s, body, _) = send(
        &app,
        Request::get(format!("/api/runs/{id}/artifacts/analysis_report")).body(Body::empty()).unwrap(),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let report: Value = serde_json::from_slice(&body).unwrap();
    let failed: Vec<&Value> = report["detector_verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| v["failed"] == true)
        .collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["sensor"], "barometer");

    let plot = format!("runs/{id}/analysis/{}", report["plots"][0].as_str().unwrap());
    let (s, body, ctype) = send(&app, Request::get(format!("/api/plots/{plot}")).body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype, "image/svg+xml");
    assert!(body.starts_with(b"<svg") || body.starts_with(b"<?xml"));

    let (s, v) = call(&app, "GET", "/api/runs", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn analytics_console_over_http() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let log = write_ulog(&fixtures::synthetic_log(Some(Sensor::Gps))).unwrap();
    let (s, body, _) = send(&app, multipart("/api/logs", &log)).await;
    assert_eq!(s, StatusCode::CREATED);
    let rec: Value = serde_json::from_slice(&body).unwrap();
    let log_id = rec["log_id"].as_str().unwrap();

    let (s, v) = call(&app, "GET", "/api/logs", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v[0]["log_id"], log_id);

    let q = json!({"log_id": log_id, "question": "Was the satellite count low?"});
    let (s, v) = call(&app, "POST", "/api/analytics/query", Some(q)).await;
    assert_eq!(s, StatusCode::OK);
    let plots: Vec<&str> = v["plot_paths"].as_array().unwrap().iter().map(|p| p.as_str().unwrap()).collect();
    assert!(plots.iter().any(|p| p.contains("satellites_used")));
    assert!(!v["report"]["narrative"].as_str().unwrap().is_empty());
    let png = plots[0].replace(".svg", ".png");
    let (s, body, ctype) = send(&app, Request::get(format!("/api/plots/{png}")).body(Body::empty()).unwrap()).await;
    assert_eq!((s, ctype.as_str()), (StatusCode::OK, "image/png"));
    assert_eq!(&body[..8], b"\x89PNG\r\n\x1a\n");

    let (s, v) = call(&app, "POST", "/api/analytics/query", Some(json!({"log_id": "nope", "question": "q"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&v), "UnknownLog");
    let (s, v) = call(&app, "POST", "/api/analytics/query", Some(json!({"log_id": log_id, "question": " "}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&v), "EmptyQuestion");
}

#[tokio::test]
async fn errors_use_the_json_envelope() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (s, v) = call(&app, "POST", "/api/runs", Some(json!({"goal": ""}))).await;
    assert_eq!((s, error_code(&v)), (StatusCode::BAD_REQUEST, "EmptyGoal"));
    let (s, v) = call(&app, "POST", "/api/runs", Some(json!({"nope": 1}))).await;
    assert_eq!((s, error_code(&v)), (StatusCode::BAD_REQUEST, "InvalidInput"));
    let (s, v) = call(&app, "GET", "/api/runs/01ABC", None).await;
    assert_eq!((s, error_code(&v)), (StatusCode::NOT_FOUND, "UnknownRun"));
    let (s, v) = call(&app, "GET", "/api/plots/../secret.svg", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{v}");
    let (s, _) = call(&app, "GET", "/api/elsewhere", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
