mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use common::{copy_problems, corpus_dir};
use http_body_util::BodyExt;
use progfix::cli::cmd_cluster;
use progfix::cluster::load_store;
use progfix::problem::Problem;
use progfix::service::{evaluate, read_log, router, AppState, LogRecord, ServiceConfig, Status};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

fn config(root: &Path, timeout: f64) -> ServiceConfig {
    ServiceConfig { problems_root: root.to_path_buf(), timeout: Duration::from_secs_f64(timeout), log_dir: None, cors_origin: None }
}

/// Copies and clusters the named corpus problems under a fresh root.
fn root_with(names: &[&str]) -> TempDir {
    let tmp = TempDir::new().unwrap();
    copy_problems(names, tmp.path());
    for n in names {
        let dir = tmp.path().join(n);
        cmd_cluster(&dir, &dir.join("attempts")).unwrap();
    }
    tmp
}

fn app(cfg: &ServiceConfig) -> Router {
    router(Arc::new(AppState::load(cfg).unwrap())).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

fn attempt_source(problem: &str, id: &str) -> String {
    fs::read_to_string(corpus_dir(problem).join("attempts").join(format!("{id}.mini"))).unwrap()
}

async fn submit(app: &Router, problem: &str, source: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/problems/{problem}/attempts"), Some(json!({ "source": source }))).await
}

#[tokio::test]
async fn lists_zero_one_and_six_problems() {
    let empty = TempDir::new().unwrap();
    let (s, v) = call(&app(&config(empty.path(), 5.0)), "GET", "/problems", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!([]));

    let one = root_with(&["derivatives"]);
    let (_, v) = call(&app(&config(one.path(), 5.0)), "GET", "/problems", None).await;
    assert_eq!(v.as_array().unwrap().len(), 1);
    assert_eq!(v[0]["id"], "derivatives");
    assert!(v[0]["statement"].as_str().unwrap().contains("derivative"));

    let six = root_with(&["dense", "derivatives", "fibonacci", "oddTuples", "polynomials"]);
    common::copy_dir(&six.path().join("derivatives"), &six.path().join("derivatives2"));
    let (_, v) = call(&app(&config(six.path(), 5.0)), "GET", "/problems", None).await;
    assert_eq!(v.as_array().unwrap().len(), 6);
}

#[tokio::test]
async fn i1_gets_one_explicit_item() {
    let root = root_with(&["derivatives"]);
    let app = app(&config(root.path(), 10.0));
    let (s, v) = submit(&app, "derivatives", &attempt_source("derivatives", "I1")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "feedback");
    let items = v["feedback"]["items"].as_array().unwrap();
    assert_eq!(items.len(), 1);
    assert_eq!(items[0]["line"], 3);
    let msg = items[0]["message"].as_str().unwrap();
    assert!(msg.contains('+') && msg.contains('-'), "{msg}");
    assert!(v["elapsed_ms"].as_u64().unwrap() < 10_000);
    assert!(v["attempt_id"].is_string());
}

#[tokio::test]
async fn c2_is_correct() {
    let root = root_with(&["derivatives"]);
    let app = app(&config(root.path(), 10.0));
    let (s, v) = submit(&app, "derivatives", &attempt_source("derivatives", "C2")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "correct");
    assert!(v.get("feedback").is_none());
}

#[tokio::test]
async fn gibberish_is_422_with_position() {
    let root = root_with(&["derivatives"]);
    let app = app(&config(root.path(), 10.0));
    let (s, v) = submit(&app, "derivatives", "def computeDeriv(poly):\n    x = = 3 $$\n").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["line"], 2);
    assert!(v["column"].as_u64().unwrap() >= 1);
}

#[tokio::test]
async fn no_structure_returns_fallback() {
    let root = root_with(&["derivatives"]);
    let app = app(&config(root.path(), 10.0));
    let (s, v) = submit(&app, "derivatives", "def computeDeriv(poly):\n    return [0.0]\n").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "no_feedback");
    assert_eq!(v["reason"], "no_structure");
    let fallback = Problem::load(&root.path().join("derivatives")).unwrap().config.fallback_text;
    assert_eq!(v["feedback"]["fallback"], fallback.as_str());
}

#[tokio::test]
async fn unknown_problem_and_bad_body() {
    let root = root_with(&["derivatives"]);
    let app = app(&config(root.path(), 10.0));
    let (s, _) = submit(&app, "nope", "def f(x):\n    return x\n").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/problems/derivatives/attempts", Some(json!({ "code": "x" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn grading() {
    let root = root_with(&["derivatives"]);
    let app = app(&config(root.path(), 10.0));
    let (_, v) = submit(&app, "derivatives", &attempt_source("derivatives", "I1")).await;
    let id = v["attempt_id"].as_str().unwrap().to_string();
    let uri = format!("/attempts/{id}/grade");
    let grade = |g: Value| call(&app, "POST", &uri, Some(g));

    assert_eq!(grade(json!({ "grade": 0 })).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(grade(json!({ "grade": 6 })).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(grade(json!({ "grade": 3, "comment": "x".repeat(2049) })).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(grade(json!({ "grade": 5 })).await.0, StatusCode::NO_CONTENT);
    assert_eq!(grade(json!({ "grade": 4, "comment": "clear" })).await.0, StatusCode::NO_CONTENT);

    let (_, v) = submit(&app, "derivatives", &attempt_source("derivatives", "C2")).await;
    let correct = v["attempt_id"].as_str().unwrap();
    let (s, _) = call(&app, "POST", &format!("/attempts/{correct}/grade"), Some(json!({ "grade": 5 }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/attempts/a999/grade", Some(json!({ "grade": 5 }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let log = read_log(&root.path().join("derivatives/attempts.jsonl")).unwrap();
    let grades: Vec<(u8, Option<String>)> = log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Grade { attempt_id, grade, comment, .. } if *attempt_id == id => Some((*grade, comment.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(grades, [(5, None), (4, Some("clear".to_string()))]);
}

#[tokio::test]
async fn log_is_append_only_and_replays_identically() {
    let root = root_with(&["derivatives"]);
    let cfg = config(root.path(), 10.0);
    let log_path = root.path().join("derivatives/attempts.jsonl");
    let sources = [
        attempt_source("derivatives", "I1"),
        attempt_source("derivatives", "I2"),
        attempt_source("derivatives", "C2"),
        "def computeDeriv(poly):\n    return [0.0]\n".to_string(),
        "def computeDeriv(poly) return\n".to_string(),
    ];
    let app1 = app(&cfg);
    let mut prev = String::new();
    for src in &sources {
        submit(&app1, "derivatives", src).await;
        let now = fs::read_to_string(&log_path).unwrap();
        assert!(now.starts_with(&prev), "log was rewritten");
        prev = now;
    }

    let problem = Problem::load(&root.path().join("derivatives")).unwrap();
    let specs: Vec<_> = load_store(&problem.dir).unwrap().representatives().map(|(_, e)| e.program.clone()).collect();
    let records = read_log(&log_path).unwrap();
    assert_eq!(records.len(), sources.len());
    for rec in &records {
        let LogRecord::Attempt { source, status, feedback, .. } = rec else { panic!("unexpected record") };
        let (eval, _) = evaluate(&problem, &specs, source, cfg.timeout);
        assert_eq!(eval.status(), *status);
        assert_eq!(eval.feedback(), feedback.as_ref());
    }

    // A restarted service keeps numbering after the logged attempts.
    let app2 = app(&cfg);
    let (_, v) = submit(&app2, "derivatives", &sources[0]).await;
    assert_eq!(v["attempt_id"], format!("a{}", sources.len() + 1));
    let first = match &records[0] {
        LogRecord::Attempt { attempt_id, .. } => attempt_id.clone(),
        _ => unreachable!(),
    };
    let (s, _) = call(&app2, "POST", &format!("/attempts/{first}/grade"), Some(json!({ "grade": 2 }))).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
}

#[tokio::test]
async fn separate_log_dir() {
    let root = root_with(&["derivatives"]);
    let logs = TempDir::new().unwrap();
    let cfg = ServiceConfig { log_dir: Some(logs.path().to_path_buf()), ..config(root.path(), 10.0) };
    submit(&app(&cfg), "derivatives", &attempt_source("derivatives", "C2")).await;
    let records = read_log(&logs.path().join("derivatives.jsonl")).unwrap();
    assert!(matches!(&records[..], [LogRecord::Attempt { status: Status::Correct, .. }]));
    assert!(!root.path().join("derivatives/attempts.jsonl").exists());
}

#[tokio::test]
async fn engine_timeout_is_503_within_budget() {
    let root = root_with(&["dense"]);
    let app = app(&config(root.path(), 1.0));
    let start = Instant::now();
    let (s, v) = submit(&app, "dense", &attempt_source("dense", "Z1")).await;
    let elapsed = start.elapsed();
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE, "{v}");
    assert_eq!(v["status"], "no_feedback");
    assert_eq!(v["reason"], "timeout");
    assert!(v["feedback"]["fallback"].is_string());
    assert!(v["feedback"]["items"].as_array().unwrap().is_empty());
    assert!(elapsed < Duration::from_secs(2), "{elapsed:?}");
}

fn set_grow(dir: &Path, on: bool) {
    let p = dir.join("problem.toml");
    let text = fs::read_to_string(&p).unwrap();
    fs::write(&p, format!("grow_store = {on}\n{text}")).unwrap();
}

/// Derivative problem whose store holds only C1.
fn single_cluster_root(grow: bool) -> (TempDir, PathBuf) {
    let tmp = TempDir::new().unwrap();
    copy_problems(&["derivatives"], tmp.path());
    let dir = tmp.path().join("derivatives");
    set_grow(&dir, grow);
    let only = tmp.path().join("only");
    fs::create_dir(&only).unwrap();
    fs::copy(dir.join("attempts/C1.mini"), only.join("C1.mini")).unwrap();
    cmd_cluster(&dir, &only).unwrap();
    (tmp, dir)
}

#[tokio::test]
async fn correct_submissions_grow_store_when_enabled() {
    let (tmp, dir) = single_cluster_root(true);
    let app = app(&config(tmp.path(), 10.0));
    assert_eq!(load_store(&dir).unwrap().order.len(), 1);
    let (_, v) = submit(&app, "derivatives", &attempt_source("derivatives", "C3")).await;
    assert_eq!(v["status"], "correct");
    let store = load_store(&dir).unwrap();
    assert_eq!(store.order.len(), 2);
    assert!(store.order.contains(&v["attempt_id"].as_str().unwrap().to_string()));
}

#[tokio::test]
async fn store_is_unchanged_by_default() {
    let (tmp, dir) = single_cluster_root(false);
    let app = app(&config(tmp.path(), 10.0));
    submit(&app, "derivatives", &attempt_source("derivatives", "C3")).await;
    assert_eq!(load_store(&dir).unwrap().order.len(), 1);
}

#[tokio::test]
async fn cors_headers() {
    let root = root_with(&["derivatives"]);
    let cfg = ServiceConfig { cors_origin: Some("http://play.example".into()), ..config(root.path(), 5.0) };
    let app = app(&cfg);
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/problems/derivatives/attempts")
        .header(header::ORIGIN, "http://play.example")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://play.example");

    let req = Request::builder().uri("/problems").header(header::ORIGIN, "http://elsewhere.example").body(Body::empty()).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    // Only the configured origin is ever allowed; other origins are not echoed.
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://play.example");
}
