//! HTTP control plane.
//!
//! All store mutations go through a single writer thread; handlers read the
//! store directly. Live sessions run on blocking tasks and publish their
//! per-sample stream through an in-memory log that clients long-poll with a
//! cursor. Once a live session is persisted its log is dropped and the stream
//! is served by replaying the stored samples.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use oculab_core::geometry::GazeSample;
use oculab_core::pedagogy::{mark_complete, student_frontier, NodeRef, PedagogyError, StudentProgress, TopicGraph};
use oculab_core::store::{now_timestamp, parse_timestamp, PatientProfile, SessionRecord, Store, StoreError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::sync::{mpsc, oneshot, watch};
use tokio_util::task::TaskTracker;

use crate::runs::{self, RunError, StreamItem};
use crate::runspec::{Overrides, RunSpec, RunSpecFile, SpecError};

const DEFAULT_WAIT: Duration = Duration::from_secs(20);
const MAX_WAIT: Duration = Duration::from_secs(60);
const MAX_PAGE: usize = 2000;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": message.into() }) }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound { .. } => Self::new(StatusCode::NOT_FOUND, msg),
            StoreError::UnknownMetric { valid, .. } => Self::bad_request(msg).with("valid", json!(valid)),
            StoreError::AlreadyExists(_) => Self::new(StatusCode::CONFLICT, msg),
            StoreError::Invalid(_) | StoreError::BadHeader { .. } | StoreError::Samples { .. } => {
                Self::bad_request(msg)
            }
            StoreError::Io { .. } | StoreError::Json { .. } => Self::internal(msg),
        }
    }
}

impl From<PedagogyError> for ApiError {
    fn from(e: PedagogyError) -> Self {
        let msg = e.to_string();
        match e {
            PedagogyError::Locked { missing, .. } => Self::new(StatusCode::CONFLICT, msg).with("missing", json!(missing)),
            PedagogyError::Cycle(path) => Self::bad_request(msg).with("cycle", json!(path)),
            PedagogyError::UnknownNode(_) => Self::new(StatusCode::NOT_FOUND, msg),
            _ => Self::bad_request(msg),
        }
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Store(s) => s.into(),
            RunError::Metrics(m) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, m.to_string()),
            other => Self::bad_request(other.to_string()),
        }
    }
}

impl From<SpecError> for ApiError {
    fn from(e: SpecError) -> Self {
        Self::bad_request(e.0)
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

type Reply<T> = oneshot::Sender<Result<T, ApiError>>;

enum WriteOp {
    CreatePatient(String, Reply<PatientProfile>),
    SaveSession(Box<SessionRecord>, Vec<GazeSample>, Reply<()>),
    SaveGraph(TopicGraph, Reply<()>),
    Complete(String, NodeRef, Reply<StudentProgress>),
}

fn run_writer(mut store: Store, mut rx: mpsc::Receiver<WriteOp>) {
    while let Some(op) = rx.blocking_recv() {
        match op {
            WriteOp::CreatePatient(name, reply) => {
                let _ = reply.send(store.create_patient(&name).map_err(Into::into));
            }
            WriteOp::SaveSession(record, samples, reply) => {
                let _ = reply.send(store.save_session(&record, &samples).map(|_| ()).map_err(Into::into));
            }
            WriteOp::SaveGraph(graph, reply) => {
                let _ = reply.send(store.save_graph(&graph).map_err(Into::into));
            }
            WriteOp::Complete(student, node, reply) => {
                let result = (|| -> Result<StudentProgress, ApiError> {
                    let graph = store.load_graph()?;
                    let progress = store.load_progress(&student)?;
                    let next = mark_complete(&progress, &graph, &node)?;
                    if next != progress {
                        store.save_progress(&next)?;
                    }
                    Ok(next)
                })();
                let _ = reply.send(result);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum LiveStatus {
    Running,
    Complete,
    Failed,
}

struct LiveLog {
    items: Vec<StreamItem>,
    status: LiveStatus,
    error: Option<String>,
}

struct LiveSession {
    log: Mutex<LiveLog>,
    changed: watch::Sender<u64>,
}

impl LiveSession {
    fn update(&self, f: impl FnOnce(&mut LiveLog)) {
        f(&mut self.log.lock().expect("live log lock"));
        self.changed.send_modify(|v| *v += 1);
    }
}

struct Inner {
    reader: Store,
    writer: mpsc::Sender<WriteOp>,
    live: Mutex<HashMap<String, Arc<LiveSession>>>,
    tracker: TaskTracker,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the store at `root` and starts the writer thread.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let store = Store::open(root)?;
        let (tx, rx) = mpsc::channel(64);
        let writer_store = store.clone();
        std::thread::Builder::new()
            .name("oculab-writer".into())
            .spawn(move || run_writer(writer_store, rx))
            .expect("spawn writer thread");
        Ok(Self(Arc::new(Inner { reader: store, writer: tx, live: Mutex::new(HashMap::new()), tracker: TaskTracker::new() })))
    }

    async fn write<T>(&self, op: impl FnOnce(Reply<T>) -> WriteOp) -> Result<T, ApiError> {
        let (tx, rx) = oneshot::channel();
        self.0.writer.send(op(tx)).await.map_err(|_| ApiError::internal("writer stopped"))?;
        rx.await.map_err(|_| ApiError::internal("writer dropped request"))?
    }

    fn live(&self, id: &str) -> Option<Arc<LiveSession>> {
        self.0.live.lock().expect("live map lock").get(id).cloned()
    }

    pub fn live_count(&self) -> usize {
        self.0.live.lock().expect("live map lock").len()
    }

    /// Stops accepting new live sessions and waits for running ones to be
    /// persisted.
    pub async fn drain(&self) {
        self.0.tracker.close();
        self.0.tracker.wait().await;
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/patients", get(list_patients).post(create_patient))
        .route("/patients/{id}/sessions", get(patient_sessions))
        .route("/patients/{id}/trends", get(trends))
        .route("/runs", axum::routing::post(start_run))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/stream", get(stream))
        .route("/pedagogy/graph", get(get_graph).put(put_graph))
        .route("/pedagogy/progress/{student}", get(get_progress).post(post_progress))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then waits for live sessions to finish.
pub async fn serve(state: AppState, addr: SocketAddr, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown).await?;
    tracing::info!(live = state.live_count(), "draining live sessions");
    state.drain().await;
    Ok(())
}

async fn health(State(st): State<AppState>) -> Json<Value> {
    Json(json!({ "status": "ok", "live_sessions": st.live_count() }))
}

async fn list_patients(State(st): State<AppState>) -> Result<Json<Vec<PatientProfile>>, ApiError> {
    Ok(Json(st.0.reader.list_patients()?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewPatient {
    display_name: String,
}

async fn create_patient(State(st): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: NewPatient = parse_body(&body)?;
    let p = st.write(|r| WriteOp::CreatePatient(req.display_name, r)).await?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn patient_sessions(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<SessionRecord>>, ApiError> {
    let reader = st.0.reader.clone();
    blocking(move || {
        reader.patient(&id)?;
        Ok(Json(reader.list_sessions(Some(&id))?))
    })
    .await
}

#[derive(Deserialize)]
struct TrendQuery {
    metric: Option<String>,
}

async fn trends(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<TrendQuery>,
) -> Result<Json<Value>, ApiError> {
    let metric = q.metric.ok_or_else(|| {
        ApiError::bad_request("missing query parameter 'metric'")
            .with("valid", json!(oculab_core::metrics::METRIC_NAMES))
    })?;
    let reader = st.0.reader.clone();
    blocking(move || {
        let points = reader.trend(&id, &metric)?;
        Ok(Json(json!({ "patient_id": id, "metric": metric, "points": points })))
    })
    .await
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RunMode {
    #[default]
    Batch,
    Live,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    patient_id: String,
    #[serde(default)]
    test: Map<String, Value>,
    #[serde(default)]
    subject: Map<String, Value>,
    #[serde(default)]
    thresholds: Map<String, Value>,
    /// Server-side samples CSV to replay instead of simulating a subject.
    samples_file: Option<PathBuf>,
    seed: Option<u64>,
    #[serde(default)]
    mode: RunMode,
    /// Pace a live session at the configured sample rate.
    #[serde(default)]
    realtime: bool,
    started_at: Option<String>,
}

/// Where a run's samples come from.
struct Source {
    spec: RunSpec,
    samples: Option<Vec<GazeSample>>,
}

impl Source {
    fn run(&self, observe: impl FnMut(&GazeSample, &oculab_core::protocol::Step)) -> Result<runs::Outcome, RunError> {
        match &self.samples {
            Some(samples) => runs::replay_observed(&self.spec.config, &self.spec.thresholds, samples, observe),
            None => runs::simulate_observed(&self.spec, observe),
        }
    }
}

async fn start_run(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: RunRequest = parse_body(&body)?;
    let replay = match (&req.samples_file, req.subject.is_empty()) {
        (Some(_), false) => return Err(ApiError::bad_request("give either 'subject' or 'samples_file', not both")),
        (None, true) => return Err(ApiError::bad_request("a subject source is required: 'subject' or 'samples_file'")),
        (Some(path), true) => {
            let path = path.clone();
            Some(blocking(move || {
                let f = std::fs::File::open(&path)
                    .map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))?;
                Ok(oculab_core::store::read_samples_csv(std::io::BufReader::new(f))?)
            })
            .await?)
        }
        (None, false) => None,
    };
    let spec = RunSpecFile { test: req.test, subject: req.subject, thresholds: req.thresholds }
        .resolve(Overrides { seed: req.seed, ..Default::default() })?;
    let subject = replay.is_none().then(|| spec.subject.clone());
    let source = Source { spec, samples: replay };
    st.0.reader.patient(&req.patient_id)?;
    let started_at = match &req.started_at {
        Some(s) => parse_timestamp(s)?,
        None => now_timestamp(),
    };
    let session_id = SessionRecord::new_id();

    match req.mode {
        RunMode::Batch => {
            let (patient_id, sid) = (req.patient_id, session_id);
            let (record, samples) = blocking(move || {
                let out = source.run(|_, _| {})?;
                let record = runs::session_record(sid, &patient_id, &started_at, &source.spec.thresholds, subject.as_ref(), &out);
                Ok((record, out.raw.samples))
            })
            .await?;
            let record = Box::new(record);
            let body = serde_json::to_value(&*record).expect("record serializes");
            st.write(|r| WriteOp::SaveSession(record, samples, r)).await?;
            Ok((StatusCode::CREATED, Json(body)).into_response())
        }
        RunMode::Live => {
            if st.0.tracker.is_closed() {
                return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "server is shutting down"));
            }
            let session = Arc::new(LiveSession {
                log: Mutex::new(LiveLog { items: Vec::new(), status: LiveStatus::Running, error: None }),
                changed: watch::channel(0).0,
            });
            st.0.live.lock().expect("live map lock").insert(session_id.clone(), session.clone());
            let state = st.clone();
            let (sid, patient_id, realtime) = (session_id.clone(), req.patient_id, req.realtime);
            st.0.tracker.spawn_blocking(move || {
                let t0 = Instant::now();
                let result = source.run(|sample, step| {
                    if realtime {
                        let due = t0 + Duration::from_secs_f64(sample.t);
                        if let Some(wait) = due.checked_duration_since(Instant::now()) {
                            std::thread::sleep(wait);
                        }
                    }
                    session.update(|log| {
                        let item = StreamItem::new(log.items.len() as u64, sample, step);
                        log.items.push(item);
                    });
                });
                let persisted = result.map_err(ApiError::from).and_then(|out| {
                    let record = runs::session_record(sid.clone(), &patient_id, &started_at, &source.spec.thresholds, subject.as_ref(), &out);
                    let (tx, rx) = oneshot::channel();
                    state
                        .0
                        .writer
                        .blocking_send(WriteOp::SaveSession(Box::new(record), out.raw.samples, tx))
                        .map_err(|_| ApiError::internal("writer stopped"))?;
                    rx.blocking_recv().map_err(|_| ApiError::internal("writer dropped request"))?
                });
                match persisted {
                    Ok(()) => {
                        session.update(|log| log.status = LiveStatus::Complete);
                        state.0.live.lock().expect("live map lock").remove(&sid);
                    }
                    Err(e) => {
                        tracing::warn!(session = %sid, error = %e.body["error"], "live session failed");
                        session.update(|log| {
                            log.status = LiveStatus::Failed;
                            log.error = e.body["error"].as_str().map(str::to_string);
                        });
                    }
                }
            });
            let stream = format!("/sessions/{session_id}/stream");
            Ok((StatusCode::ACCEPTED, Json(json!({ "session_id": session_id, "stream": stream }))).into_response())
        }
    }
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    if let Some(live) = st.live(&id) {
        let log = live.log.lock().expect("live log lock");
        let body = json!({ "session_id": id, "status": log.status, "samples": log.items.len(), "error": log.error });
        let code = if log.status == LiveStatus::Failed { StatusCode::INTERNAL_SERVER_ERROR } else { StatusCode::ACCEPTED };
        return Ok((code, Json(body)).into_response());
    }
    let reader = st.0.reader.clone();
    let bytes = blocking(move || Ok(reader.session_bytes(&id)?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

#[derive(Deserialize)]
struct StreamQuery {
    #[serde(default)]
    cursor: u64,
    wait_ms: Option<u64>,
    limit: Option<usize>,
}

#[derive(Serialize)]
struct StreamPage {
    session_id: String,
    status: LiveStatus,
    /// Pass back as `cursor` to continue.
    cursor: u64,
    /// No further items will appear for this session.
    done: bool,
    items: Vec<StreamItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn page(id: &str, all: &[StreamItem], cursor: u64, limit: usize, status: LiveStatus, error: Option<String>) -> StreamPage {
    let start = (cursor as usize).min(all.len());
    let end = (start + limit).min(all.len());
    let finished = status != LiveStatus::Running;
    StreamPage {
        session_id: id.to_string(),
        status,
        cursor: end as u64,
        done: finished && end == all.len(),
        items: all[start..end].to_vec(),
        error,
    }
}

/// Long-poll: returns as soon as items past `cursor` exist or the session
/// ends, otherwise after `wait_ms` with an empty page.
async fn stream(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<StreamQuery>) -> Result<Json<StreamPage>, ApiError> {
    let limit = q.limit.unwrap_or(MAX_PAGE).clamp(1, MAX_PAGE);
    let wait = q.wait_ms.map_or(DEFAULT_WAIT, Duration::from_millis).min(MAX_WAIT);
    if let Some(live) = st.live(&id) {
        let mut rx = live.changed.subscribe();
        let deadline = tokio::time::Instant::now() + wait;
        loop {
            rx.borrow_and_update();
            {
                let log = live.log.lock().expect("live log lock");
                if (q.cursor as usize) < log.items.len() || log.status != LiveStatus::Running {
                    return Ok(Json(page(&id, &log.items, q.cursor, limit, log.status, log.error.clone())));
                }
            }
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => continue,
                // Sender gone: the session was persisted and dropped; serve from the store.
                Ok(Err(_)) => break,
                Err(_) => {
                    let log = live.log.lock().expect("live log lock");
                    return Ok(Json(page(&id, &log.items, q.cursor, limit, log.status, log.error.clone())));
                }
            }
        }
    }
    let reader = st.0.reader.clone();
    let cursor = q.cursor;
    blocking(move || {
        let record = reader.load_session(&id)?;
        let samples = reader.load_samples(&record)?;
        let items = runs::replay_stream(&record.config, &samples)?;
        Ok(Json(page(&id, &items, cursor, limit, LiveStatus::Complete, None)))
    })
    .await
}

async fn get_graph(State(st): State<AppState>) -> Result<Json<TopicGraph>, ApiError> {
    Ok(Json(st.0.reader.load_graph()?))
}

async fn put_graph(State(st): State<AppState>, body: Bytes) -> Result<Json<TopicGraph>, ApiError> {
    let graph: TopicGraph = parse_body(&body)?;
    let saved = graph.clone();
    st.write(|r| WriteOp::SaveGraph(graph, r)).await?;
    Ok(Json(saved))
}

fn progress_view(graph: &TopicGraph, progress: StudentProgress) -> Result<Json<Value>, ApiError> {
    let frontier = student_frontier(graph, &progress)?;
    Ok(Json(json!({
        "student_id": progress.student_id,
        "progress": progress,
        "frontier": frontier,
        "available": frontier.refs(),
    })))
}

async fn get_progress(State(st): State<AppState>, Path(student): Path<String>) -> Result<Json<Value>, ApiError> {
    let graph = st.0.reader.load_graph()?;
    let progress = st.0.reader.load_progress(&student)?;
    progress_view(&graph, progress)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompleteRequest {
    complete: String,
}

async fn post_progress(State(st): State<AppState>, Path(student): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: CompleteRequest = parse_body(&body)?;
    let node: NodeRef = req.complete.parse()?;
    let progress = st.write(|r| WriteOp::Complete(student, node, r)).await?;
    let graph = st.0.reader.load_graph()?;
    progress_view(&graph, progress)
}
