//! HTTP facade over spaces and sessions.
//!
//! Each session has a single writer: an event is accepted only if its
//! sequence number is the next one and no other event is in flight.
//! Accepted events are computed on the blocking pool while reads keep
//! serving the last materialized state. Progress and version bumps are
//! pushed to `/sessions/{id}/stream` as server-sent events.

mod api_error;

pub use api_error::{ApiError, ErrorCode};

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dreamspace_core::reduce::{Phase, Progress};
use dreamspace_core::rng::fnv1a;
use dreamspace_core::session::{replay, EventKind, ExplorationSession, SessionConfig, SessionEvent, SessionState};
use dreamspace_core::{Channel, SolutionSpace};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::broadcast;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::{Stream, StreamExt};

use crate::config::ServiceConfig;
use crate::dataset::{open_space, IngestOptions};
use crate::error::{Error, Result};
use crate::session_log;

const STREAM_CAPACITY: usize = 4096;

/// A space loaded into the service; immutable and shared by its sessions.
#[derive(Debug)]
pub struct LoadedSpace {
    pub id: String,
    pub name: String,
    /// Directory that mesh references resolve against.
    pub root: PathBuf,
    pub source: PathBuf,
    pub space: Arc<SolutionSpace>,
}

/// Messages on a session's event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    Progress { seq: u64, phase: Phase, percent: f64 },
    Tsne { seq: u64, iteration: usize, kl: f64 },
    Version { version: u64 },
    Failed { seq: u64, error: ApiError },
}

impl StreamEvent {
    fn name(&self) -> &'static str {
        match self {
            StreamEvent::Progress { .. } => "progress",
            StreamEvent::Tsne { .. } => "tsne",
            StreamEvent::Version { .. } => "version",
            StreamEvent::Failed { .. } => "failed",
        }
    }
}

struct WriterSlot {
    /// Next sequence number to accept.
    next: u64,
    in_flight: bool,
}

pub struct SessionHandle {
    pub id: String,
    current: RwLock<Arc<ExplorationSession>>,
    slot: Mutex<WriterSlot>,
    tx: broadcast::Sender<StreamEvent>,
    log_path: PathBuf,
}

impl SessionHandle {
    fn new(id: String, session: ExplorationSession, tx: broadcast::Sender<StreamEvent>, log_path: PathBuf) -> Self {
        SessionHandle {
            id,
            slot: Mutex::new(WriterSlot {
                next: session.next_seq(),
                in_flight: false,
            }),
            current: RwLock::new(Arc::new(session)),
            tx,
            log_path,
        }
    }

    pub fn current(&self) -> Arc<ExplorationSession> {
        self.current.read().expect("session lock").clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.tx.subscribe()
    }
}

pub struct AppState {
    config: ServiceConfig,
    spaces: RwLock<BTreeMap<String, Arc<LoadedSpace>>>,
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
    counter: AtomicU64,
}

pub type SharedState = Arc<AppState>;

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    let s = s.trim_matches('-').to_string();
    if s.is_empty() {
        "space".into()
    } else {
        s
    }
}

fn progress_sender(tx: broadcast::Sender<StreamEvent>, seq: u64) -> impl FnMut(Progress) {
    move |p| {
        let msg = match p {
            Progress::Phase { phase, percent } => StreamEvent::Progress { seq, phase, percent },
            Progress::Tsne { iteration, kl } => StreamEvent::Tsne { seq, iteration, kl },
        };
        let _ = tx.send(msg);
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

impl AppState {
    /// Creates the session directory under the data root.
    pub fn new(config: ServiceConfig) -> Result<SharedState> {
        let dir = config.sessions_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Arc::new(AppState {
            config,
            spaces: RwLock::new(BTreeMap::new()),
            sessions: RwLock::new(BTreeMap::new()),
            counter: AtomicU64::new(1),
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn space(&self, id: &str) -> Option<Arc<LoadedSpace>> {
        self.spaces.read().expect("space lock").get(id).cloned()
    }

    fn space_or_404(&self, id: &str) -> Result<Arc<LoadedSpace>, ApiError> {
        self.space(id).ok_or_else(|| ApiError::not_found(format!("space {id}")))
    }

    /// Loads a dataset directory or `space.json` (blocking). Loading the
    /// same source twice is a conflict.
    pub fn load_space(&self, path: &FsPath, opts: &IngestOptions) -> Result<Arc<LoadedSpace>, ApiError> {
        let source = path.canonicalize().map_err(|e| Error::io(path, e))?;
        if self.spaces.read().expect("space lock").values().any(|s| s.source == source) {
            return Err(ApiError::new(
                ErrorCode::Conflict,
                format!("{} is already loaded", source.display()),
            ));
        }
        let (root, name, space) = open_space(&source, opts)?;
        let id = format!("{}-{:08x}", slug(&name), fnv1a(source.to_string_lossy().as_bytes()) as u32);
        let loaded = Arc::new(LoadedSpace {
            id: id.clone(),
            name,
            root,
            source,
            space: Arc::new(space),
        });
        let mut spaces = self.spaces.write().expect("space lock");
        if spaces.contains_key(&id) {
            return Err(ApiError::new(ErrorCode::Conflict, format!("space {id} is already loaded")));
        }
        spaces.insert(id, loaded.clone());
        tracing::info!(space = %loaded.id, n = loaded.space.len(), "space loaded");
        Ok(loaded)
    }

    fn log_path(&self, session: &str) -> PathBuf {
        self.config.sessions_dir().join(format!("{session}.ndjson"))
    }

    fn fresh_session_id(&self) -> String {
        loop {
            let n = self.counter.fetch_add(1, Ordering::Relaxed);
            let id = format!("session-{n:06}");
            let taken = self.sessions.read().expect("session lock").contains_key(&id);
            if !taken && !self.log_path(&id).exists() {
                return id;
            }
        }
    }

    /// Opens a session from its config (blocking).
    pub fn create_session(&self, space_id: &str, config: SessionConfig) -> Result<Arc<SessionHandle>, ApiError> {
        let loaded = self.space_or_404(space_id)?;
        let id = self.fresh_session_id();
        let (tx, _) = broadcast::channel(STREAM_CAPACITY);
        let event = SessionEvent {
            seq: 0,
            timestamp_ms: now_ms(),
            event: EventKind::CreateSession {
                space: space_id.to_string(),
                config,
            },
        };
        let mut progress = progress_sender(tx.clone(), 0);
        let session = ExplorationSession::create(event, loaded.space.clone(), &mut progress)?;
        let log_path = self.log_path(&id);
        session_log::write_log(&log_path, session.log())?;
        let handle = Arc::new(SessionHandle::new(id.clone(), session, tx, log_path));
        self.sessions.write().expect("session lock").insert(id, handle.clone());
        Ok(handle)
    }

    /// In-memory session, or one resumed from its persisted log (blocking).
    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        if let Some(h) = self.sessions.read().expect("session lock").get(id) {
            return Ok(h.clone());
        }
        let path = self.log_path(id);
        if !crate::dataset::is_valid_id(id) || !path.is_file() {
            return Err(ApiError::not_found(format!("session {id}")));
        }
        let log = session_log::read_log(&path)?;
        let session = replay(&log, |space| self.space(space).map(|s| s.space.clone()), &mut |_| {})?;
        let (tx, _) = broadcast::channel(STREAM_CAPACITY);
        let handle = Arc::new(SessionHandle::new(id.to_string(), session, tx, path));
        let mut sessions = self.sessions.write().expect("session lock");
        Ok(sessions.entry(id.to_string()).or_insert(handle).clone())
    }

    /// Reserves `event.seq`, computes the transition and publishes it
    /// (blocking). The reservation is released on failure.
    pub fn apply(&self, handle: &SessionHandle, seq: u64, event: EventKind) -> Result<Arc<ExplorationSession>, ApiError> {
        if matches!(event, EventKind::CreateSession { .. }) {
            return Err(ApiError::validation("sessions are created with POST /sessions"));
        }
        {
            let mut slot = handle.slot.lock().expect("slot lock");
            if seq != slot.next {
                return Err(ApiError::from(dreamspace_core::Error::Conflict {
                    expected: slot.next,
                    found: seq,
                }));
            }
            if slot.in_flight {
                return Err(ApiError::new(ErrorCode::Busy, "another event is being applied"));
            }
            slot.next += 1;
            slot.in_flight = true;
        }
        let release = |ok: bool| {
            let mut slot = handle.slot.lock().expect("slot lock");
            if !ok {
                slot.next -= 1;
            }
            slot.in_flight = false;
        };
        let current = handle.current();
        let event = SessionEvent {
            seq,
            timestamp_ms: now_ms(),
            event,
        };
        let mut progress = progress_sender(handle.tx.clone(), seq);
        let next = match current.apply_event(event.clone(), &mut progress) {
            Ok(next) => next,
            Err(e) => {
                release(false);
                let err = ApiError::from(e);
                let _ = handle.tx.send(StreamEvent::Failed { seq, error: err.clone() });
                return Err(err);
            }
        };
        if let Err(e) = session_log::append_event(&handle.log_path, &event) {
            release(false);
            return Err(e.into());
        }
        let next = Arc::new(next);
        *handle.current.write().expect("session lock") = next.clone();
        release(true);
        let _ = handle.tx.send(StreamEvent::Progress {
            seq,
            phase: Phase::Layout,
            percent: 100.0,
        });
        let _ = handle.tx.send(StreamEvent::Version { version: next.version() });
        Ok(next)
    }
}

fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| ApiError {
        code: ErrorCode::Validation,
        message: e.inner().to_string(),
        field: Some(e.path().to_string()),
    })
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn field_error(field: &str, message: impl Into<String>) -> ApiError {
    ApiError {
        code: ErrorCode::Validation,
        message: message.into(),
        field: Some(field.into()),
    }
}

/// Server defaults overridden by the fields present in `patch`.
pub fn session_config(defaults: &SessionConfig, patch: Option<Value>) -> Result<SessionConfig, ApiError> {
    let mut base = serde_json::to_value(defaults).expect("config serializes");
    if let Some(p) = patch {
        if !p.is_object() {
            return Err(field_error("config", "config must be an object"));
        }
        merge(&mut base, p);
    }
    let cfg: SessionConfig = serde_path_to_error::deserialize(base).map_err(|e| {
        field_error(&format!("config.{}", e.path()), e.inner().to_string())
    })?;
    if !(cfg.rho > 0.0 && cfg.rho < 1.0) {
        return Err(field_error("config.rho", "rho must lie in (0, 1)"));
    }
    if !(0.0..=1.0).contains(&cfg.balance) {
        return Err(field_error("config.balance", "balance must lie in [0, 1]"));
    }
    if cfg.k == Some(0) {
        return Err(field_error("config.k", "k must be at least 1"));
    }
    if !(cfg.lod.full_detail >= 0.0 && cfg.lod.full_detail <= cfg.lod.star) {
        return Err(field_error("config.lod", "thresholds must satisfy 0 <= full_detail <= star"));
    }
    Ok(cfg)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadSpaceRequest {
    path: PathBuf,
    #[serde(default)]
    pairs: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    channels: Option<Vec<Channel>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SpaceInfo {
    pub id: String,
    pub name: String,
    pub n: usize,
    pub channels: Vec<Channel>,
    pub shape_bins: usize,
}

impl SpaceInfo {
    fn of(s: &LoadedSpace) -> Self {
        SpaceInfo {
            id: s.id.clone(),
            name: s.name.clone(),
            n: s.space.len(),
            channels: s.space.layout().metric_channels.clone(),
            shape_bins: s.space.layout().shape_bins,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSessionRequest {
    space: String,
    #[serde(default)]
    config: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session: String,
    pub version: u64,
    pub survivor_count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRequest {
    seq: u64,
    event: EventKind,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventAccepted {
    pub seq: u64,
    pub version: u64,
}

#[derive(Serialize)]
struct StateResponse<'a> {
    session: &'a str,
    version: u64,
    survivor_count: usize,
    seed_count: usize,
    cluster_count: usize,
    state: &'a SessionState,
}

fn json_bytes(status: StatusCode, body: &impl Serialize) -> Response {
    match serde_json::to_vec(body) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

async fn post_space(State(st): State<SharedState>, body: Bytes) -> Result<Response, ApiError> {
    let req: LoadSpaceRequest = parse_body(&body)?;
    let mut opts = st.config.ingest.clone();
    if let Some(p) = req.pairs {
        opts.pairs = p;
    }
    if let Some(s) = req.seed {
        opts.seed = s;
    }
    if let Some(c) = req.channels {
        opts.channels = c;
    }
    let loaded = blocking(move || st.load_space(&req.path, &opts)).await?;
    Ok(json_bytes(StatusCode::CREATED, &SpaceInfo::of(&loaded)))
}

async fn list_spaces(State(st): State<SharedState>) -> Response {
    let list: Vec<SpaceInfo> = st.spaces.read().expect("space lock").values().map(|s| SpaceInfo::of(s)).collect();
    json_bytes(StatusCode::OK, &list)
}

async fn get_space(State(st): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(json_bytes(StatusCode::OK, &SpaceInfo::of(&*st.space_or_404(&id)?)))
}

async fn get_mesh(State(st): State<SharedState>, Path((id, sid)): Path<(String, String)>) -> Result<Response, ApiError> {
    let loaded = st.space_or_404(&id)?;
    let idx = loaded.space.require_index(&sid)?;
    let rel = &loaded.space.solution(idx).mesh_ref;
    let path = loaded.root.join(rel);
    let bytes = tokio::fs::read(&path).await.map_err(|e| ApiError::from(Error::io(&path, e)))?;
    let content_type = match path.extension().and_then(|e| e.to_str()) {
        Some("stl") => "model/stl",
        _ => "model/obj",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

async fn post_session(State(st): State<SharedState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSessionRequest = parse_body(&body)?;
    let config = session_config(&st.config.session, req.config)?;
    let handle = blocking(move || st.create_session(&req.space, config)).await?;
    let s = handle.current();
    Ok(json_bytes(
        StatusCode::CREATED,
        &SessionCreated {
            session: handle.id.clone(),
            version: s.version(),
            survivor_count: s.state().survivors.len(),
        },
    ))
}

async fn session_handle(st: &SharedState, id: String) -> Result<Arc<SessionHandle>, ApiError> {
    let st = st.clone();
    blocking(move || st.session(&id)).await
}

async fn post_event(State(st): State<SharedState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: EventRequest = parse_body(&body)?;
    let handle = session_handle(&st, id).await?;
    let next = blocking(move || st.apply(&handle, req.seq, req.event)).await?;
    Ok(json_bytes(
        StatusCode::OK,
        &EventAccepted {
            seq: req.seq,
            version: next.version(),
        },
    ))
}

fn query_version(raw: Option<String>) -> Result<Option<u64>, ApiError> {
    let Some(q) = raw else { return Ok(None) };
    for pair in q.split('&') {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        match k {
            "version" => {
                return v
                    .parse()
                    .map(Some)
                    .map_err(|_| field_error("version", format!("version must be an integer, got {v:?}")));
            }
            "" => {}
            other => return Err(field_error(other, format!("unknown query parameter {other}"))),
        }
    }
    Ok(None)
}

fn state_body(id: &str, s: &ExplorationSession) -> Response {
    let st = s.state();
    json_bytes(
        StatusCode::OK,
        &StateResponse {
            session: id,
            version: s.version(),
            survivor_count: st.survivors.len(),
            seed_count: st.seeds.len(),
            cluster_count: st.tree.roots.len(),
            state: st,
        },
    )
}

async fn get_state(
    State(st): State<SharedState>,
    Path(id): Path<String>,
    RawQuery(q): RawQuery,
) -> Result<Response, ApiError> {
    let want = query_version(q)?;
    let handle = session_handle(&st, id.clone()).await?;
    let current = handle.current();
    match want {
        None => Ok(state_body(&id, &current)),
        Some(v) if v == current.version() => Ok(state_body(&id, &current)),
        Some(v) if v >= 1 && v < current.version() => {
            let log = current.log()[..v as usize].to_vec();
            let space = current.space().clone();
            let past = blocking(move || Ok(replay(&log, |_| Some(space), &mut |_| {})?)).await?;
            Ok(state_body(&id, &past))
        }
        Some(v) => Err(ApiError::not_found(format!(
            "version {v} not available (current {})",
            current.version()
        ))),
    }
}

async fn get_table(State(st): State<SharedState>, Path((id, sid)): Path<(String, String)>) -> Result<Response, ApiError> {
    let handle = session_handle(&st, id).await?;
    let model = handle.current().table_model(&sid)?;
    Ok(json_bytes(StatusCode::OK, &model))
}

fn sse_event(e: &StreamEvent) -> Event {
    Event::default()
        .event(e.name())
        .data(serde_json::to_string(e).expect("stream events serialize"))
}

async fn get_stream(
    State(st): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = std::result::Result<Event, Infallible>>>, ApiError> {
    let handle = session_handle(&st, id).await?;
    let rx = handle.subscribe();
    let first = StreamEvent::Version {
        version: handle.current().version(),
    };
    let initial = tokio_stream::once(Ok(sse_event(&first)));
    let live = BroadcastStream::new(rx).filter_map(|m| m.ok().map(|e| Ok(sse_event(&e))));
    Ok(Sse::new(initial.chain(live)).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

async fn get_log(State(st): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let handle = session_handle(&st, id).await?;
    let text = session_log::to_ndjson(handle.current().log());
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/spaces", post(post_space).get(list_spaces))
        .route("/spaces/{id}", get(get_space))
        .route("/spaces/{id}/solutions/{sid}/mesh", get(get_mesh))
        .route("/sessions", post(post_session))
        .route("/sessions/{id}/events", post(post_event))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/table/{sid}", get(get_table))
        .route("/sessions/{id}/stream", get(get_stream))
        .route("/sessions/{id}/log", get(get_log))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async {
            let body = ApiError::validation("method not allowed");
            (StatusCode::METHOD_NOT_ALLOWED, Json(body))
        })
        .with_state(state)
}

/// Loads the configured spaces and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let addr = format!("{}:{}", config.bind, config.port);
    let preload = config.preload.clone();
    let state = AppState::new(config)?;
    for path in preload {
        let st = state.clone();
        let opts = st.config.ingest.clone();
        blocking(move || st.load_space(&path, &opts))
            .await
            .map_err(|e| Error::Invalid(format!("preloading space: {}", e.message)))?;
    }
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| Error::io(&addr, e))?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(&addr, e))
}
