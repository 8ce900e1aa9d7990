//! HTTP service for interactive sessions.
//!
//! Each session owns an event log under `sessions/`; on startup every log is
//! replayed so state survives restarts. Mutations of one session are
//! serialised through its mutex (a FIFO queue in tokio), while the index a
//! session ranks with lives behind a separate lock that is only held to swap
//! or clone an `Arc` — adapted indexes are built outside both locks.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use anyhow::Context;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

use eraseek_core::corpus::{load_manifest, load_model, StoredModel};
use eraseek_core::encode::{encode_bow, encode_fv};
use eraseek_core::eval::MapAveraging;
use eraseek_core::retrieve::{
    build_index, replay, Alignment, EventLog, FeedbackRound, Hit, IndexMode, MapMode, RetrievalIndex, Session,
    SessionConfig, SessionEvent, SessionState,
};
use eraseek_core::{Domain, Error, FeatureMatrix};

use crate::args::ServeArgs;
use crate::commands::{archive_labels, load_store, map_mode, scored_map};

/// Largest `k` a query may ask for.
pub const MAX_K: usize = 1000;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub index: PathBuf,
    pub queries: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub encoder: Option<PathBuf>,
    pub map_mode: MapMode,
    pub session: SessionConfig,
    pub sessions_dir: PathBuf,
}

impl ServerConfig {
    pub fn from_args(a: &ServeArgs) -> Self {
        Self {
            index: a.index.clone(),
            queries: a.queries.clone(),
            manifest: a.manifest.clone(),
            encoder: a.encoder.clone(),
            map_mode: map_mode(a.map_mode),
            session: a.session.config(),
            sessions_dir: a.out.join("sessions"),
        }
    }
}

struct QueryImages {
    matrix: FeatureMatrix<f32>,
    positions: HashMap<String, usize>,
}

struct Core {
    session: Session<f32>,
    log: EventLog,
    uploads: usize,
}

struct Slot {
    core: Mutex<Core>,
    /// Index this session ranks with: raw until the first model, then adapted.
    current: RwLock<Arc<RetrievalIndex<f32>>>,
}

impl Slot {
    fn current(&self) -> Arc<RetrievalIndex<f32>> {
        Arc::clone(&self.current.read().expect("index lock poisoned"))
    }
}

pub struct AppState {
    raw: Arc<RetrievalIndex<f32>>,
    labels: Vec<Option<String>>,
    queries: Option<QueryImages>,
    thumbs: HashMap<String, PathBuf>,
    encoder: Option<StoredModel<f32>>,
    map_mode: MapMode,
    session_config: SessionConfig,
    dir: PathBuf,
    sessions: RwLock<BTreeMap<String, Arc<Slot>>>,
    next_sid: AtomicU64,
}

impl AppState {
    /// Load the index and replay every session log found in the sessions directory.
    pub fn open(cfg: &ServerConfig) -> anyhow::Result<Arc<Self>> {
        let store = load_store(&cfg.index)?;
        let labels = archive_labels(store.labels.as_deref(), &store.relevant);
        let raw = Arc::new(build_index(&store)?);
        drop(store);
        let queries = match &cfg.queries {
            Some(p) => {
                let s = load_store(p)?;
                let labels = s.labels.clone().filter(|l| l.iter().all(|x| !x.is_empty()));
                let matrix = FeatureMatrix::new(s.data, s.ids, labels, Domain::Target)?;
                let positions = matrix.ids().iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
                Some(QueryImages { matrix, positions })
            }
            None => None,
        };
        let thumbs = match &cfg.manifest {
            Some(p) => {
                let base = p.parent().unwrap_or(Path::new(".")).to_path_buf();
                load_manifest(p)?.entries.into_iter().map(|e| (e.id, base.join(e.uri))).collect()
            }
            None => HashMap::new(),
        };
        let encoder = cfg.encoder.as_deref().map(load_model::<f32>).transpose()?;
        std::fs::create_dir_all(&cfg.sessions_dir)
            .with_context(|| format!("creating {}", cfg.sessions_dir.display()))?;

        let state = Self {
            raw,
            labels,
            queries,
            thumbs,
            encoder,
            map_mode: cfg.map_mode,
            session_config: cfg.session.clone(),
            dir: cfg.sessions_dir.clone(),
            sessions: RwLock::new(BTreeMap::new()),
            next_sid: AtomicU64::new(1),
        };
        let mut logs: Vec<PathBuf> = std::fs::read_dir(&cfg.sessions_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        logs.sort();
        let mut max_sid = 0;
        for path in logs {
            let sid = path.file_stem().expect("log has a stem").to_string_lossy().into_owned();
            let slot = state.restore(&sid, &path).with_context(|| format!("replaying session {sid}"))?;
            if let Some(n) = sid.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                max_sid = max_sid.max(n);
            }
            state.sessions.write().expect("sessions lock").insert(sid, Arc::new(slot));
        }
        state.next_sid.store(max_sid + 1, Ordering::SeqCst);
        Ok(Arc::new(state))
    }

    fn config_path(&self, sid: &str) -> PathBuf {
        self.dir.join(format!("{sid}.config.json"))
    }

    fn restore(&self, sid: &str, log_path: &Path) -> anyhow::Result<Slot> {
        let config: SessionConfig = match std::fs::read_to_string(self.config_path(sid)) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(_) => self.session_config.clone(),
        };
        let (log, records) = EventLog::open(log_path)?;
        let session = replay(&self.raw, config, &records)?;
        let uploads = records
            .iter()
            .filter(|r| matches!(&r.event, SessionEvent::Query { query_id, .. } if query_id.starts_with("upload-")))
            .count();
        let current = match &session.alignment {
            Some(a) => Arc::new(self.raw.adapted(Arc::clone(a), self.map_mode)?),
            None => Arc::clone(&self.raw),
        };
        tracing::info!(sid, events = records.len(), state = ?session.state(), "session restored");
        Ok(Slot { core: Mutex::new(Core { session, log, uploads }), current: RwLock::new(current) })
    }

    fn slot(&self, sid: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(sid)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_SESSION", format!("no session '{sid}'")))
    }

    fn create_session(&self) -> Result<(String, Arc<Slot>), ApiError> {
        let sid = format!("s{:04}", self.next_sid.fetch_add(1, Ordering::SeqCst));
        let cfg = serde_json::to_string_pretty(&self.session_config).expect("config serialises");
        std::fs::write(self.config_path(&sid), cfg).map_err(|e| ApiError::internal(e.to_string()))?;
        let (log, _) = EventLog::open(self.dir.join(format!("{sid}.jsonl")))?;
        let slot = Arc::new(Slot {
            core: Mutex::new(Core { session: Session::new(self.session_config.clone()), log, uploads: 0 }),
            current: RwLock::new(Arc::clone(&self.raw)),
        });
        self.sessions.write().expect("sessions lock").insert(sid.clone(), Arc::clone(&slot));
        Ok((sid, slot))
    }

    fn encode_upload(&self, descriptors: &[Vec<f32>]) -> Result<Array1<f32>, ApiError> {
        let enc = self.encoder.as_ref().ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, "ENCODER_UNAVAILABLE", "server was started without --encoder")
        })?;
        let d = descriptors.first().map_or(0, Vec::len);
        if d == 0 || descriptors.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("descriptors must be a non-empty rectangular matrix".into()).into());
        }
        let flat: Vec<f32> = descriptors.iter().flatten().copied().collect();
        let m = ndarray::Array2::from_shape_vec((descriptors.len(), d), flat).expect("rectangular");
        let v = match enc {
            StoredModel::Gmm(g) => encode_fv(m.view(), g)?,
            StoredModel::Codebook(c) => encode_bow(m.view(), c, None)?,
            other => return Err(ApiError::internal(format!("encoder is a {:?} model", other.kind()))),
        };
        if v.values.len() != self.raw.dim() {
            return Err(Error::InvalidDimension(format!(
                "encoded upload has dimension {} but the index has {}",
                v.values.len(),
                self.raw.dim()
            ))
            .into());
        }
        Ok(v.values)
    }
}

// ------------------------------------------------------------------ errors

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidFeedback(_)
            | Error::InvalidInput(_)
            | Error::InvalidDimension(_)
            | Error::Schema { .. }
            | Error::DegenerateData(_) => StatusCode::BAD_REQUEST,
            Error::NotReady(_) | Error::MissingLabels(_) | Error::InsufficientData(_) => StatusCode::CONFLICT,
            Error::AdaptationFailed(_) | Error::DegenerateSpectrum(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MALFORMED_REQUEST", r.body_text())
    }
}

impl From<anyhow::Error> for ApiError {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<Error>() {
            Ok(core) => core.into(),
            Err(e) => Self::internal(format!("{e:#}")),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

// ------------------------------------------------------------------- views

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Counters {
    pub n_s: usize,
    pub n_t: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Thresholds {
    pub d_hat_s: Option<f64>,
    pub d_hat_t: Option<f64>,
    /// Rounded estimates the counters must exceed.
    pub d_s: Option<usize>,
    pub d_t: Option<usize>,
    pub estimated: bool,
    pub min_distinct: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StatusView {
    pub sid: String,
    pub state: SessionState,
    pub round: usize,
    pub seq: u64,
    pub counters: Counters,
    pub thresholds: Thresholds,
    pub adapted: bool,
    pub k_star: Option<usize>,
    pub model_hash: Option<String>,
    pub index_mode: String,
}

fn status_view(sid: &str, core: &Core, current: &RetrievalIndex<f32>) -> StatusView {
    let s = &core.session;
    StatusView {
        sid: sid.to_string(),
        state: s.state(),
        round: s.round(),
        seq: core.log.next_seq() - 1,
        counters: Counters { n_s: s.n_s(), n_t: s.n_t() },
        thresholds: Thresholds {
            d_hat_s: s.d_hat_s.map(|d| d.value),
            d_hat_t: s.d_hat_t.map(|d| d.value),
            d_s: s.d_hat_s.map(|d| d.rounded),
            d_t: s.d_hat_t.map(|d| d.rounded),
            estimated: s.d_hat_s.is_some(),
            min_distinct: s.config.min_distinct,
        },
        adapted: s.alignment.is_some(),
        k_star: s.k_star,
        model_hash: s.model_hash.clone(),
        index_mode: mode_name(current.mode()).into(),
    }
}

fn mode_name(m: IndexMode) -> &'static str {
    match m {
        IndexMode::Raw => "raw",
        IndexMode::Adapted => "adapted",
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HitView {
    pub rank: usize,
    pub id: String,
    pub score: f64,
}

fn hits_view(hits: Vec<Hit>) -> Vec<HitView> {
    hits.into_iter().enumerate().map(|(i, h)| HitView { rank: i + 1, id: h.id, score: h.score }).collect()
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    /// Rank with the session's current index (adapted once a model exists).
    #[default]
    Current,
    Raw,
    /// Current ranking plus the raw ranking for side-by-side display.
    Compare,
    /// Naive neighbour-query baseline.
    Baseline,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub image_id: Option<String>,
    pub descriptors: Option<Vec<Vec<f32>>>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub mode: QueryMode,
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryResponse {
    pub query_id: String,
    pub ranking: String,
    pub hits: Vec<HitView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_hits: Option<Vec<HitView>>,
    pub status: StatusView,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub query_id: String,
    pub selected_ids: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub round: usize,
    pub events: Vec<String>,
    /// none, estimated, triggered, relearned or failed.
    pub adaptation: String,
    pub status: StatusView,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdaptResponse {
    pub events: Vec<String>,
    pub status: StatusView,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub queries: usize,
    pub pre_map: Option<f64>,
    pub post_map: Option<f64>,
    pub naive_map: Option<f64>,
    pub status: StatusView,
}

fn event_name(e: &SessionEvent) -> &'static str {
    match e {
        SessionEvent::Query { .. } => "query",
        SessionEvent::Feedback { .. } => "feedback",
        SessionEvent::ReadaptRequested => "readapt-requested",
        SessionEvent::DimsEstimated { .. } => "dims-estimated",
        SessionEvent::Adapted { .. } => "adapted",
        SessionEvent::AdaptationFailed { .. } => "adaptation-failed",
    }
}

// ---------------------------------------------------------------- handlers

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/archive/{id}/thumb", get(thumb))
        .route("/session", post(create_session))
        .route("/session/{sid}/status", get(status))
        .route("/session/{sid}/query", post(query))
        .route("/session/{sid}/feedback", post(feedback))
        .route("/session/{sid}/adapt", post(adapt))
        .route("/session/{sid}/metrics", get(metrics))
        .with_state(state)
}

async fn health(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(
        json!({ "ok": true, "items": st.raw.len(), "dim": st.raw.dim(), "sessions": st.sessions.read().expect("lock").len() }),
    )
}

async fn thumb(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let path = st
        .thumbs
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_IMAGE", format!("no thumbnail for '{id}'")))?;
    let bytes = blocking(move || {
        std::fs::read(&path)
            .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, "THUMB_UNAVAILABLE", format!("{}: {e}", path.display())))
    })
    .await?;
    let ext = st.thumbs[&id].extension().map(|e| e.to_string_lossy().to_lowercase()).unwrap_or_default();
    let mime = match ext.as_str() {
        "jpg" | "jpeg" => "image/jpeg",
        "png" => "image/png",
        "gif" => "image/gif",
        "webp" => "image/webp",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn create_session(State(st): State<Arc<AppState>>) -> Result<(StatusCode, Json<StatusView>), ApiError> {
    let (sid, slot) = st.create_session()?;
    let core = slot.core.lock().await;
    Ok((StatusCode::CREATED, Json(status_view(&sid, &core, &slot.current()))))
}

async fn status(State(st): State<Arc<AppState>>, UrlPath(sid): UrlPath<String>) -> ApiResult<StatusView> {
    let slot = st.slot(&sid)?;
    let core = slot.core.lock().await;
    Ok(Json(status_view(&sid, &core, &slot.current())))
}

async fn query(
    State(st): State<Arc<AppState>>,
    UrlPath(sid): UrlPath<String>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> ApiResult<QueryResponse> {
    let Json(req) = body?;
    let slot = st.slot(&sid)?;
    if req.k == 0 || req.k > MAX_K {
        return Err(Error::InvalidInput(format!("k must be in 1..={MAX_K}, got {}", req.k)).into());
    }
    let vector = match (&req.image_id, &req.descriptors) {
        (Some(id), None) => resolve_image(&st, id)?,
        (None, Some(d)) => st.encode_upload(d)?,
        _ => return Err(Error::InvalidInput("give exactly one of image_id or descriptors".into()).into()),
    };

    let (query_id, session) = {
        let mut core = slot.core.lock().await;
        let query_id = match &req.image_id {
            Some(id) => id.clone(),
            None => {
                core.uploads += 1;
                format!("upload-{:04}", core.uploads)
            }
        };
        if core.session.query_vector(&query_id).is_none() {
            let next = core.session.issue_query(&query_id, vector.view())?;
            core.log.append(SessionEvent::Query {
                query_id: query_id.clone(),
                vector: vector.iter().map(|v| f64::from(*v)).collect(),
            })?;
            core.session = next;
        }
        (query_id, core.session.clone())
    };

    let current = slot.current();
    let raw = Arc::clone(&st.raw);
    let (k, mode) = (req.k, req.mode);
    let (ranking, hits, raw_hits) = blocking(move || {
        let q = vector.view();
        Ok(match mode {
            QueryMode::Current => (mode_name(current.mode()), current.query_topk(q, k)?, None),
            QueryMode::Raw => ("raw", raw.query_topk(q, k)?, None),
            QueryMode::Compare => {
                (mode_name(current.mode()), current.query_topk(q, k)?, Some(hits_view(raw.query_topk(q, k)?)))
            }
            QueryMode::Baseline => ("baseline", session.baseline_neighbor_query(&raw, q, k)?, None),
        })
    })
    .await?;
    let core = slot.core.lock().await;
    Ok(Json(QueryResponse {
        query_id,
        ranking: ranking.into(),
        hits: hits_view(hits),
        raw_hits,
        status: status_view(&sid, &core, &slot.current()),
    }))
}

fn resolve_image(st: &AppState, id: &str) -> Result<Array1<f32>, ApiError> {
    if let Some(q) = &st.queries {
        if let Some(&p) = q.positions.get(id) {
            return Ok(q.matrix.row(p).to_owned());
        }
    }
    if let Some(p) = st.raw.position(id) {
        return Ok(st.raw.raw_vector(p)?.to_owned());
    }
    Err(ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_IMAGE", format!("no stored features for image '{id}'")))
}

/// Build the adapted index for `alignment` off the async workers and swap it
/// in, unless a newer model has been installed meanwhile.
async fn install(st: &AppState, slot: &Slot, alignment: Arc<Alignment<f32>>, hash: String) -> Result<(), ApiError> {
    let raw = Arc::clone(&st.raw);
    let mode = st.map_mode;
    let adapted = blocking(move || Ok(raw.adapted(alignment, mode)?)).await?;
    let core = slot.core.lock().await;
    if core.session.model_hash.as_deref() == Some(hash.as_str()) {
        *slot.current.write().expect("index lock poisoned") = Arc::new(adapted);
    }
    Ok(())
}

fn new_model(before: &Option<String>, session: &Session<f32>) -> Option<(Arc<Alignment<f32>>, String)> {
    match (&session.alignment, &session.model_hash) {
        (Some(a), Some(h)) if before.as_ref() != Some(h) => Some((Arc::clone(a), h.clone())),
        _ => None,
    }
}

async fn feedback(
    State(st): State<Arc<AppState>>,
    UrlPath(sid): UrlPath<String>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> ApiResult<FeedbackResponse> {
    let Json(req) = body?;
    let slot = st.slot(&sid)?;
    let (events, model, round) = {
        let mut core = slot.core.lock().await;
        let fb = FeedbackRound { query_id: req.query_id, selected_ids: req.selected_ids, round: 0 };
        let before = core.session.model_hash.clone();
        let (next, events) = core.session.apply_feedback(&st.raw, &fb)?;
        core.log.append_all(events.clone())?;
        let model = new_model(&before, &next);
        let round = next.round();
        core.session = next;
        (events, model, round)
    };
    let had_model = events.iter().any(|e| matches!(e, SessionEvent::Adapted { .. }));
    if let Some((a, h)) = model {
        install(&st, &slot, a, h).await?;
    }
    let adaptation = if events.iter().any(|e| matches!(e, SessionEvent::AdaptationFailed { .. })) {
        "failed"
    } else if had_model {
        let core = slot.core.lock().await;
        if core.session.k_star == Some(round) {
            "triggered"
        } else {
            "relearned"
        }
    } else if events.iter().any(|e| matches!(e, SessionEvent::DimsEstimated { .. })) {
        "estimated"
    } else {
        "none"
    };
    let core = slot.core.lock().await;
    Ok(Json(FeedbackResponse {
        round,
        events: events.iter().map(|e| event_name(e).to_string()).collect(),
        adaptation: adaptation.into(),
        status: status_view(&sid, &core, &slot.current()),
    }))
}

async fn adapt(State(st): State<Arc<AppState>>, UrlPath(sid): UrlPath<String>) -> ApiResult<AdaptResponse> {
    let slot = st.slot(&sid)?;
    let (events, model) = {
        let mut core = slot.core.lock().await;
        core.log.append(SessionEvent::ReadaptRequested)?;
        let before = core.session.model_hash.clone();
        let (next, events) = core.session.relearn()?;
        core.log.append_all(events.clone())?;
        let model = new_model(&before, &next);
        core.session = next;
        (events, model)
    };
    if let Some((a, h)) = model {
        install(&st, &slot, a, h).await?;
    }
    let core = slot.core.lock().await;
    Ok(Json(AdaptResponse {
        events: events.iter().map(|e| event_name(e).to_string()).collect(),
        status: status_view(&sid, &core, &slot.current()),
    }))
}

async fn metrics(State(st): State<Arc<AppState>>, UrlPath(sid): UrlPath<String>) -> ApiResult<MetricsResponse> {
    let slot = st.slot(&sid)?;
    let session = slot.core.lock().await.session.clone();
    let current = slot.current();
    let st2 = Arc::clone(&st);
    let (queries, pre, post, naive) = blocking(move || {
        let q = st2
            .queries
            .as_ref()
            .filter(|q| q.matrix.labels().is_some())
            .ok_or_else(|| Error::MissingLabels("metrics need a labelled query store".into()))?;
        if st2.labels.iter().all(Option::is_none) {
            return Err(Error::MissingLabels("metrics need archive labels".into()).into());
        }
        let avg = MapAveraging::PerClass;
        let pre = scored_map(&st2.raw, &st2.labels, &q.matrix, avg, |v| st2.raw.scores(v))?;
        let post = match current.mode() {
            IndexMode::Adapted => scored_map(&st2.raw, &st2.labels, &q.matrix, avg, |v| current.scores(v))?.map,
            IndexMode::Raw => None,
        };
        let naive = match session.n_t() {
            0 => None,
            _ => scored_map(&st2.raw, &st2.labels, &q.matrix, avg, |v| session.baseline_scores(&st2.raw, v))?.map,
        };
        Ok((pre.scored_queries, pre.map, post, naive))
    })
    .await?;
    let core = slot.core.lock().await;
    Ok(Json(MetricsResponse {
        queries,
        pre_map: pre,
        post_map: post,
        naive_map: naive,
        status: status_view(&sid, &core, &slot.current()),
    }))
}

/// Bind and serve until Ctrl-C.
pub async fn serve(cfg: ServerConfig, addr: &str) -> anyhow::Result<()> {
    let state = AppState::open(&cfg)?;
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!(addr = %listener.local_addr()?, items = state.raw.len(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
