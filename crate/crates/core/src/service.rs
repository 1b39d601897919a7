//! HTTP API: list problems, submit attempts for classification and
//! feedback, and grade the feedback. Attempts and grades are appended to
//! one newline-delimited JSON log per problem.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::cluster::{load_store, save_store, ClusterError, Clustering};
use crate::feedback::{render, Feedback};
use crate::frontend::{compile, FrontendError, SourceUnit};
use crate::model::Program;
use crate::problem::{Problem, ProblemError};
use crate::repair::{repair_best, RepairError, RepairOptions};

pub const MAX_COMMENT_BYTES: usize = 2048;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Directory whose subdirectories holding a `problem.toml` are served.
    pub problems_root: PathBuf,
    pub timeout: Duration,
    /// Where attempt logs go; each problem directory when absent.
    pub log_dir: Option<PathBuf>,
    pub cors_origin: Option<String>,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Store(#[from] ClusterError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: line {line}: {message}", path.display())]
    Log { path: PathBuf, line: usize, message: String },
    #[error("invalid CORS origin {0}")]
    Cors(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Correct,
    Feedback,
    NoFeedback,
    ParseError,
}

/// Result of running the engine on one submission.
#[derive(Clone, Debug, PartialEq)]
pub enum Evaluation {
    Correct,
    Feedback(Feedback),
    NoFeedback { reason: String, feedback: Feedback },
    ParseError(FrontendError),
}

impl Evaluation {
    pub fn status(&self) -> Status {
        match self {
            Evaluation::Correct => Status::Correct,
            Evaluation::Feedback(_) => Status::Feedback,
            Evaluation::NoFeedback { .. } => Status::NoFeedback,
            Evaluation::ParseError(_) => Status::ParseError,
        }
    }

    pub fn feedback(&self) -> Option<&Feedback> {
        match self {
            Evaluation::Feedback(f) | Evaluation::NoFeedback { feedback: f, .. } => Some(f),
            _ => None,
        }
    }

    fn reason(&self) -> Option<&str> {
        match self {
            Evaluation::NoFeedback { reason, .. } => Some(reason),
            _ => None,
        }
    }
}

/// Classifies and, if incorrect, repairs one submission. Deterministic in
/// its arguments, so replaying a log reproduces the recorded feedback.
pub fn evaluate(problem: &Problem, specs: &[Program], source: &str, timeout: Duration) -> (Evaluation, Option<Program>) {
    let unit = SourceUnit::new("attempt", source);
    let prog = match compile(&unit) {
        Ok(p) => p,
        Err(e) => return (Evaluation::ParseError(e), None),
    };
    if problem.is_correct(&prog) {
        return (Evaluation::Correct, Some(prog));
    }
    let opts = RepairOptions { budget: timeout, step_limit: problem.step_limit() };
    let eval = match repair_best(specs, &prog, &problem.inputs, &opts) {
        Ok(r) => {
            let fb = render(Some(&r), &prog, &problem.config);
            if fb.items.is_empty() {
                Evaluation::NoFeedback { reason: "cost_threshold".into(), feedback: fb }
            } else {
                Evaluation::Feedback(fb)
            }
        }
        Err(e) => {
            let reason = match e {
                RepairError::Timeout => "timeout",
                RepairError::NoStructure => "no_structure",
                _ => "no_repair",
            };
            Evaluation::NoFeedback { reason: reason.into(), feedback: render(None, &prog, &problem.config) }
        }
    };
    (eval, Some(prog))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Attempt {
        attempt_id: String,
        timestamp_ms: u64,
        source: String,
        status: Status,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feedback: Option<Feedback>,
        elapsed_ms: u64,
    },
    Grade {
        attempt_id: String,
        timestamp_ms: u64,
        grade: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comment: Option<String>,
    },
}

/// Reads every record of a log; a missing log is empty.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, ServiceError> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(ServiceError::Io { path: path.to_path_buf(), source }),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ServiceError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| ServiceError::Log { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub struct ProblemState {
    pub problem: Problem,
    specs: RwLock<Vec<Program>>,
    store: tokio::sync::Mutex<Clustering>,
    pub log_path: PathBuf,
    log_lock: tokio::sync::Mutex<()>,
}

impl ProblemState {
    pub fn specs(&self) -> Vec<Program> {
        self.specs.read().expect("specs lock").clone()
    }

    async fn append(&self, rec: &LogRecord) -> Result<(), ServiceError> {
        let _guard = self.log_lock.lock().await;
        let path = &self.log_path;
        let io = |source| ServiceError::Io { path: path.clone(), source };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(f, "{line}").map_err(io)
    }
}

#[derive(Clone, Debug)]
struct AttemptMeta {
    problem: String,
    gradable: bool,
}

pub struct AppState {
    pub problems: BTreeMap<String, Arc<ProblemState>>,
    pub timeout: Duration,
    cors_origin: Option<String>,
    attempts: Mutex<HashMap<String, AttemptMeta>>,
    next_id: AtomicU64,
}

fn specs_of(store: &Clustering) -> Vec<Program> {
    store.representatives().map(|(_, e)| e.program.clone()).collect()
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl AppState {
    /// Loads every problem under the root, its store and its log.
    pub fn load(config: &ServiceConfig) -> Result<AppState, ServiceError> {
        let root = &config.problems_root;
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)
            .map_err(|source| ServiceError::Io { path: root.clone(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("problem.toml").is_file())
            .collect();
        dirs.sort();
        let mut problems = BTreeMap::new();
        let mut attempts = HashMap::new();
        let mut max_id = 0;
        for dir in dirs {
            let problem = Problem::load(&dir)?;
            let store = load_store(&dir)?;
            let log_path = match &config.log_dir {
                Some(d) => d.join(format!("{}.jsonl", problem.id)),
                None => dir.join("attempts.jsonl"),
            };
            for rec in read_log(&log_path)? {
                if let LogRecord::Attempt { attempt_id, status, .. } = rec {
                    if let Some(n) = attempt_id.strip_prefix('a').and_then(|n| n.parse::<u64>().ok()) {
                        max_id = max_id.max(n);
                    }
                    let gradable = status == Status::Feedback;
                    attempts.insert(attempt_id, AttemptMeta { problem: problem.id.clone(), gradable });
                }
            }
            let state = ProblemState {
                specs: RwLock::new(specs_of(&store)),
                store: tokio::sync::Mutex::new(store),
                log_path,
                log_lock: tokio::sync::Mutex::new(()),
                problem,
            };
            problems.insert(state.problem.id.clone(), Arc::new(state));
        }
        Ok(AppState {
            problems,
            timeout: config.timeout,
            cors_origin: config.cors_origin.clone(),
            attempts: Mutex::new(attempts),
            next_id: AtomicU64::new(max_id + 1),
        })
    }

    fn fresh_id(&self) -> String {
        format!("a{}", self.next_id.fetch_add(1, Ordering::SeqCst))
    }
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": kind, "message": message.into() }))).into_response()
}

fn internal(e: impl std::fmt::Display) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

#[derive(Serialize)]
struct ProblemSummary<'a> {
    id: &'a str,
    statement: &'a str,
}

async fn list_problems(State(st): State<Arc<AppState>>) -> Response {
    let list: Vec<ProblemSummary> =
        st.problems.values().map(|p| ProblemSummary { id: &p.problem.id, statement: &p.problem.config.statement }).collect();
    Json(list).into_response()
}

#[derive(Deserialize)]
struct AttemptRequest {
    source: String,
}

async fn submit_attempt(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AttemptRequest>, JsonRejection>,
) -> Response {
    let Some(ps) = st.problems.get(&id).cloned() else {
        return error(StatusCode::NOT_FOUND, "unknown_problem", format!("no problem {id}"));
    };
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.body_text()),
    };
    let start = Instant::now();
    let timeout = st.timeout;
    let specs = ps.specs();
    let worker = ps.clone();
    let source = req.source.clone();
    let job = tokio::task::spawn_blocking(move || evaluate(&worker.problem, &specs, &source, timeout));
    let (eval, prog) = match tokio::time::timeout(timeout + Duration::from_millis(500), job).await {
        Ok(Ok(x)) => x,
        Ok(Err(e)) => return internal(e),
        Err(_) => {
            let feedback = Feedback::fallback(&ps.problem.config.fallback_text);
            (Evaluation::NoFeedback { reason: "timeout".into(), feedback }, None)
        }
    };
    let elapsed_ms = start.elapsed().as_millis() as u64;
    let attempt_id = st.fresh_id();
    let rec = LogRecord::Attempt {
        attempt_id: attempt_id.clone(),
        timestamp_ms: now_ms(),
        source: req.source.clone(),
        status: eval.status(),
        reason: eval.reason().map(str::to_string),
        feedback: eval.feedback().cloned(),
        elapsed_ms,
    };
    if let Err(e) = ps.append(&rec).await {
        return internal(e);
    }
    st.attempts
        .lock()
        .expect("attempt index")
        .insert(attempt_id.clone(), AttemptMeta { problem: id.clone(), gradable: eval.status() == Status::Feedback });
    if let (Evaluation::Correct, Some(prog), true) = (&eval, prog, ps.problem.config.grow_store) {
        grow_store(&ps, &attempt_id, &req.source, prog).await;
    }
    match eval {
        Evaluation::ParseError(e) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({
                "error": "parse_error",
                "message": e.to_string(),
                "line": e.line(),
                "column": e.column(),
                "attempt_id": attempt_id,
            })),
        )
            .into_response(),
        other => {
            let mut body = json!({ "status": other.status(), "attempt_id": attempt_id, "elapsed_ms": elapsed_ms });
            if let Some(fb) = other.feedback() {
                body["feedback"] = serde_json::to_value(fb).expect("feedback serializes");
            }
            if let Some(r) = other.reason() {
                body["reason"] = json!(r);
            }
            let code = if other.reason() == Some("timeout") { StatusCode::SERVICE_UNAVAILABLE } else { StatusCode::OK };
            (code, Json(body)).into_response()
        }
    }
}

async fn grow_store(ps: &ProblemState, attempt_id: &str, source: &str, prog: Program) {
    let mut store = ps.store.lock().await;
    let unit = SourceUnit::new(attempt_id, source);
    let p = &ps.problem;
    let grown = store.add_attempt(attempt_id, unit, prog, &p.inputs, p.step_limit()).and_then(|_| save_store(&store, &p.dir));
    match grown {
        Ok(()) => *ps.specs.write().expect("specs lock") = specs_of(&store),
        Err(e) => eprintln!("store growth for {} failed: {e}", p.id),
    }
}

#[derive(Deserialize)]
struct GradeRequest {
    grade: i64,
    #[serde(default)]
    comment: Option<String>,
}

async fn grade_attempt(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<GradeRequest>, JsonRejection>,
) -> Response {
    let meta = st.attempts.lock().expect("attempt index").get(&id).cloned();
    let Some(meta) = meta else {
        return error(StatusCode::NOT_FOUND, "unknown_attempt", format!("no attempt {id}"));
    };
    if !meta.gradable {
        return error(StatusCode::NOT_FOUND, "nothing_to_grade", format!("attempt {id} received no feedback"));
    }
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.body_text()),
    };
    if !(1..=5).contains(&req.grade) {
        return error(StatusCode::BAD_REQUEST, "bad_grade", "grade must be between 1 and 5");
    }
    if req.comment.as_ref().is_some_and(|c| c.len() > MAX_COMMENT_BYTES) {
        return error(StatusCode::BAD_REQUEST, "comment_too_long", format!("comment exceeds {MAX_COMMENT_BYTES} bytes"));
    }
    let ps = &st.problems[&meta.problem];
    let rec = LogRecord::Grade { attempt_id: id, timestamp_ms: now_ms(), grade: req.grade as u8, comment: req.comment };
    match ps.append(&rec).await {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => internal(e),
    }
}

fn cors(origin: Option<&str>) -> Result<CorsLayer, ServiceError> {
    let allow = match origin {
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).map_err(|_| ServiceError::Cors(o.to_string()))?),
        None => AllowOrigin::any(),
    };
    Ok(CorsLayer::new().allow_origin(allow).allow_methods([Method::GET, Method::POST]).allow_headers([header::CONTENT_TYPE]))
}

pub fn router(state: Arc<AppState>) -> Result<Router, ServiceError> {
    let layer = cors(state.cors_origin.as_deref())?;
    Ok(Router::new()
        .route("/problems", get(list_problems))
        .route("/problems/{id}/attempts", post(submit_attempt))
        .route("/attempts/{id}/grade", post(grade_attempt))
        .layer(layer)
        .with_state(state))
}

pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::load(&config)?);
    let app = router(state)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServiceError::Io { path: PathBuf::from(addr.to_string()), source })?;
    eprintln!("listening on {addr}");
    axum::serve(listener, app).await.map_err(|source| ServiceError::Io { path: PathBuf::from(addr.to_string()), source })
}
