//! Session-oriented HTTP/JSON interface. Angles are degrees and lengths are
//! millimetres on the wire; joints are numbered from 1.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rtr_core::kinematics::{JointAxis, LockPattern, LockState, RobotConfig};
use rtr_core::sequencer::{
    replay_prefix, ActuationPack, HistoryAction, LockAction, MotionStep, PhysicsMode, Session,
    SessionOptions, SessionSnapshot, StepDiagnostics, TraceRecord, DEFAULT_SWITCH_THRESHOLD_N,
};
use rtr_core::workspace::{sample_conditional, DEFAULT_CELL_MM};
use rtr_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const API_VERSION_HEADER: &str = "rtr-api-version";
pub const API_VERSION: &str = "1";

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Largest number of configurations a workspace request may evaluate.
    pub workspace_budget: u64,
    /// Points returned by a workspace request at most.
    pub workspace_max_points: usize,
    /// Directory for per-session JSON snapshots; disabled when unset.
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            workspace_budget: 200_000,
            workspace_max_points: 5_000,
            snapshot_dir: None,
        }
    }
}

pub struct SessionSlot {
    pub id: String,
    pub created_at_unix: u64,
    pub config_hash: String,
    /// Single writer per session.
    pub session: Mutex<Session>,
    /// Last committed state, readable while a writer holds `session`.
    committed: RwLock<Arc<Value>>,
    revision: AtomicU64,
}

impl SessionSlot {
    pub fn committed_state(&self) -> Arc<Value> {
        self.committed.read().expect("state lock poisoned").clone()
    }
}

pub struct AppState {
    pub options: ServiceOptions,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(options: ServiceOptions) -> Self {
        Self {
            options,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn session(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.sessions.read().expect("session table poisoned").get(id).cloned()
    }

    fn insert(&self, session: Session, id: Option<String>) -> Arc<SessionSlot> {
        let id = id.unwrap_or_else(|| format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed)));
        let created_at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let slot = Arc::new(SessionSlot {
            config_hash: config_hash(&session.config),
            created_at_unix,
            committed: RwLock::new(Arc::new(Value::Null)),
            revision: AtomicU64::new(0),
            id: id.clone(),
            session: Mutex::new(session),
        });
        {
            let s = slot.session.lock().expect("fresh session");
            commit(&slot, &s, None);
        }
        self.sessions.write().expect("session table poisoned").insert(id, slot.clone());
        slot
    }

    /// Loads every `*.json` snapshot in the snapshot directory.
    pub fn restore_snapshots(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.options.snapshot_dir else {
            return Ok(0);
        };
        let mut n = 0;
        let mut max_id = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
                continue;
            };
            let text = std::fs::read_to_string(&path)?;
            let snap: SessionSnapshot = serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            let session = Session::from_snapshot(&snap)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            if let Some(k) = id.strip_prefix('s').and_then(|k| k.parse::<u64>().ok()) {
                max_id = max_id.max(k);
            }
            self.insert(session, Some(id));
            n += 1;
        }
        self.next_id.fetch_max(max_id + 1, Ordering::Relaxed);
        Ok(n)
    }

    fn persist(&self, slot: &SessionSlot, session: &Session) {
        if let Some(dir) = &self.options.snapshot_dir {
            let path = dir.join(format!("{}.json", slot.id));
            match serde_json::to_string(&session.snapshot()) {
                Ok(text) => {
                    if let Err(e) = std::fs::write(&path, text) {
                        eprintln!("snapshot {}: {e}", path.display());
                    }
                }
                Err(e) => eprintln!("snapshot {}: {e}", slot.id),
            }
        }
    }
}

fn config_hash(config: &RobotConfig) -> String {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    serde_json::to_string(config).unwrap_or_default().hash(&mut h);
    format!("{:016x}", h.finish())
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn busy() -> Self {
        Self::new(StatusCode::CONFLICT, "busy", "session is executing another request")
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::DimensionMismatch { .. } => {
                (StatusCode::BAD_REQUEST, "invalid_input")
            }
            Error::ConfigMismatch => (StatusCode::BAD_REQUEST, "config_mismatch"),
            Error::SelectorBusy(_) => (StatusCode::CONFLICT, "selector_busy"),
            Error::BudgetExceeded { .. } => (StatusCode::PAYLOAD_TOO_LARGE, "budget_exceeded"),
            Error::InvalidStep(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_step"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "solver_failure"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    if body.is_empty() {
        return serde_json::from_str("{}").map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "schema", e.to_string()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "schema", e.to_string()))
}

fn find(state: &AppState, id: &str) -> ApiResult<Arc<SessionSlot>> {
    state
        .session(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointView {
    pub joint: usize,
    pub axis: JointAxis,
    pub locked: bool,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateView {
    pub id: String,
    pub created_at_unix: u64,
    pub config_hash: String,
    /// Increases on every committed change, including replays.
    pub revision: u64,
    pub step_count: usize,
    pub config: RobotConfig,
    pub physics: PhysicsMode,
    pub angles_deg: Vec<f64>,
    pub joints: Vec<JointView>,
    pub tip_mm: [f64; 3],
    pub tip_direction: [f64; 3],
    pub backbone_mm: Vec<[f64; 3]>,
    pub pack: ActuationPack,
    pub last_diagnostics: Option<StepDiagnostics>,
}

fn state_view(slot: &SessionSlot, s: &Session, revision: u64) -> StateView {
    let p = &s.posture;
    let tip = p.tip();
    let dir = p.tip_direction();
    StateView {
        id: slot.id.clone(),
        created_at_unix: slot.created_at_unix,
        config_hash: slot.config_hash.clone(),
        revision,
        step_count: s.history.entries.len(),
        config: s.config.clone(),
        physics: s.history.physics.clone(),
        angles_deg: p.angles.iter().map(|a| a.to_degrees()).collect(),
        joints: (0..s.config.n_joints)
            .map(|j| JointView {
                joint: j + 1,
                axis: s.config.axes[j],
                locked: s.lock.is_locked(j),
                angle_deg: p.angles[j].to_degrees(),
            })
            .collect(),
        tip_mm: [tip.x, tip.y, tip.z],
        tip_direction: [dir.x, dir.y, dir.z],
        backbone_mm: p.joint_positions().iter().map(|q| [q.x, q.y, q.z]).collect(),
        pack: s.pack.clone(),
        last_diagnostics: s.last_diagnostics.clone(),
    }
}

/// Publishes the session state as the committed snapshot.
fn commit(slot: &SessionSlot, s: &Session, app: Option<&AppState>) -> Arc<Value> {
    let revision = slot.revision.fetch_add(1, Ordering::Relaxed) + 1;
    let value = Arc::new(serde_json::to_value(state_view(slot, s, revision)).expect("state serializes"));
    *slot.committed.write().expect("state lock poisoned") = value.clone();
    if let Some(app) = app {
        app.persist(slot, s);
    }
    value
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireLock {
    pub joint: usize,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default = "default_config")]
    pub config: RobotConfig,
    #[serde(default)]
    pub locked: Vec<WireLock>,
    #[serde(default = "default_physics")]
    pub physics: PhysicsMode,
    #[serde(default = "default_threshold")]
    pub switch_threshold_n: f64,
    #[serde(default)]
    pub lock_quantum_deg: Option<f64>,
}

fn default_config() -> RobotConfig {
    RobotConfig::spatial(7).expect("default robot is valid")
}

fn default_physics() -> PhysicsMode {
    PhysicsMode::Ideal
}

fn default_threshold() -> f64 {
    DEFAULT_SWITCH_THRESHOLD_N
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_body(&body)?;
    let n = req.config.n_joints;
    let mut locked = Vec::with_capacity(req.locked.len());
    for l in &req.locked {
        if l.joint == 0 || l.joint > n {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", format!("joint {} outside 1..={n}", l.joint)));
        }
        locked.push((l.joint - 1, l.angle_deg.to_radians()));
    }
    let lock = LockPattern::with_locked(n, &locked)?;
    let session = Session::new(
        req.config,
        Some(lock),
        SessionOptions {
            physics: req.physics,
            switch_threshold_n: req.switch_threshold_n,
            lock_quantum_rad: req.lock_quantum_deg.map(f64::to_radians),
        },
    )?;
    let slot = app.insert(session, None);
    {
        let s = slot.session.lock().expect("fresh session");
        app.persist(&slot, &s);
    }
    Ok((StatusCode::CREATED, Json(slot.committed_state().as_ref().clone())).into_response())
}

async fn get_state(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = find(&app, &id)?;
    Ok(Json(slot.committed_state().as_ref().clone()))
}

async fn lock_joint(
    State(app): State<Arc<AppState>>,
    Path((id, joint)): Path<(String, usize)>,
) -> ApiResult<Json<Value>> {
    toggle(&app, &id, joint, LockAction::Lock)
}

async fn unlock_joint(
    State(app): State<Arc<AppState>>,
    Path((id, joint)): Path<(String, usize)>,
) -> ApiResult<Json<Value>> {
    toggle(&app, &id, joint, LockAction::Unlock)
}

fn toggle(app: &AppState, id: &str, joint: usize, action: LockAction) -> ApiResult<Json<Value>> {
    let slot = find(app, id)?;
    let mut s = slot.session.try_lock().map_err(|_| ApiError::busy())?;
    if joint == 0 || joint > s.config.n_joints {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_joint",
            format!("joint {joint} outside 1..={}", s.config.n_joints),
        ));
    }
    let trace = s.toggle_lock(joint - 1, action)?;
    let state = if trace.is_empty() {
        slot.committed_state()
    } else {
        commit(&slot, &s, Some(app))
    };
    Ok(Json(json!({ "state": state.as_ref(), "trace": trace })))
}

async fn post_step(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let step: MotionStep = parse_body(&body)?;
    let slot = find(&app, &id)?;
    let mut s = slot.session.try_lock().map_err(|_| ApiError::busy())?;
    let start = s.trace.len();
    s.execute_step(&step)?;
    let trace: Vec<TraceRecord> = s.trace[start..].to_vec();
    let state = commit(&slot, &s, Some(&app));
    Ok(Json(json!({
        "state": state.as_ref(),
        "entry": s.history.entries.len(),
        "angles_deg": state["angles_deg"],
        "diagnostics": s.last_diagnostics,
        "trace": trace,
    })))
}

#[derive(Debug, Clone, Deserialize)]
pub struct WorkspaceQuery {
    #[serde(default = "default_resolution")]
    pub resolution_deg: f64,
    /// `current-locks` freezes the locked joints; `none` lets every joint move.
    #[serde(default = "default_frozen")]
    pub frozen: String,
    pub max_points: Option<usize>,
    pub cell_mm: Option<f64>,
}

fn default_resolution() -> f64 {
    6.0
}

fn default_frozen() -> String {
    "current-locks".into()
}

async fn get_workspace(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<WorkspaceQuery>,
) -> ApiResult<Json<Value>> {
    let slot = find(&app, &id)?;
    let (config, angles, lock) = {
        let s = slot.session.try_lock().map_err(|_| ApiError::busy())?;
        (s.config.clone(), s.posture.angles.clone(), s.lock.clone())
    };
    let lock = match q.frozen.as_str() {
        "current-locks" => lock,
        "none" => LockPattern::all_free(config.n_joints),
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_input",
                format!("frozen must be current-locks or none, got {other:?}"),
            ))
        }
    };
    if !(q.resolution_deg > 0.0 && q.resolution_deg.is_finite()) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", "resolution_deg must be positive"));
    }
    let cell = q.cell_mm.unwrap_or(DEFAULT_CELL_MM);
    let cloud = sample_conditional(
        &config,
        &angles,
        &lock,
        q.resolution_deg.to_radians(),
        app.options.workspace_budget,
        cell,
    )?;
    let max_points = q.max_points.unwrap_or(usize::MAX).min(app.options.workspace_max_points);
    let points = cloud.downsampled(max_points);
    Ok(Json(json!({
        "dims": cloud.dims,
        "resolution_deg": q.resolution_deg,
        "frozen": q.frozen,
        "free_joints": lock.free_joints().map(|j| j + 1).collect::<Vec<_>>(),
        "configurations": cloud.info.configurations,
        "occupied_cells": cloud.grid.len(),
        "cell_mm": cell,
        "measure": cloud.grid.measure(),
        "total_points": cloud.points.len(),
        "returned_points": points.len(),
        "points_mm": points,
    })))
}

fn wire_lock(lock: &LockPattern) -> Vec<Value> {
    lock.states
        .iter()
        .enumerate()
        .map(|(j, st)| match st {
            LockState::Free => json!({ "joint": j + 1, "locked": false }),
            LockState::Locked(a) => json!({ "joint": j + 1, "locked": true, "angle_deg": a.to_degrees() }),
        })
        .collect()
}

async fn get_history(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = find(&app, &id)?;
    let s = slot.session.try_lock().map_err(|_| ApiError::busy())?;
    let h = &s.history;
    let entries: Vec<Value> = h
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let action = match &e.action {
                HistoryAction::Toggle { joint, action } => json!({ "kind": "toggle", "joint": joint, "action": action }),
                HistoryAction::Step { step } => json!({ "kind": "step", "step": step }),
            };
            json!({
                "index": i + 1,
                "action": action,
                "angles_deg": e.angles.iter().map(|a| a.to_degrees()).collect::<Vec<_>>(),
                "lock": wire_lock(&e.lock),
            })
        })
        .collect();
    Ok(Json(json!({
        "step_count": h.entries.len(),
        "physics": h.physics,
        "initial_angles_deg": h.initial_angles.iter().map(|a| a.to_degrees()).collect::<Vec<_>>(),
        "initial_lock": wire_lock(&h.initial_lock),
        "entries": entries,
    })))
}

async fn get_snapshot(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionSnapshot>> {
    let slot = find(&app, &id)?;
    let s = slot.session.try_lock().map_err(|_| ApiError::busy())?;
    Ok(Json(s.snapshot()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRequest {
    /// Number of history entries to keep.
    pub prefix: usize,
}

async fn post_replay(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: ReplayRequest = parse_body(&body)?;
    let slot = find(&app, &id)?;
    let mut s = slot.session.try_lock().map_err(|_| ApiError::busy())?;
    if req.prefix > s.history.entries.len() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_input",
            format!("prefix {} exceeds history length {}", req.prefix, s.history.entries.len()),
        ));
    }
    let mut replayed = replay_prefix(&s.history, req.prefix)?;
    // keep the device log of what actually happened up to the prefix
    let keep = s.trace.iter().take_while(|r| r.entry < req.prefix).count();
    replayed.trace = s.trace[..keep].to_vec();
    *s = replayed;
    let state = commit(&slot, &s, Some(&app));
    Ok(Json(state.as_ref().clone()))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "api_version": 1 }))
}

async fn version_header(mut res: Response) -> Response {
    res.headers_mut()
        .insert(API_VERSION_HEADER, HeaderValue::from_static(API_VERSION));
    res
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/joints/{joint}/lock", post(lock_joint))
        .route("/sessions/{id}/joints/{joint}/unlock", post(unlock_joint))
        .route("/sessions/{id}/steps", post(post_step))
        .route("/sessions/{id}/workspace", get(get_workspace))
        .route("/sessions/{id}/history", get(get_history))
        .route("/sessions/{id}/snapshot", get(get_snapshot))
        .route("/sessions/{id}/replay", post(post_replay))
        .layer(axum::middleware::map_response(version_header))
        .with_state(state)
}

/// Serves until the listener fails or ctrl-c is received.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
