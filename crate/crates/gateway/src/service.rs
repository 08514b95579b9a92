//! HTTP service: JSON endpoints over the vault, orchestrator and pipeline.
//!
//! Readers work on immutable snapshots. Mutations go through the vault's and
//! orchestrator's single-writer paths. Training, evaluation and sweeps run as
//! background jobs, one at a time.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use notebar_core::eval::SplitSpec;
use notebar_core::forge::ingest::FieldMapping;
use notebar_core::forge::qa::QaConfig;
use notebar_core::forge::{corpus_stats, Corpus, CorpusEntry};
use notebar_core::note::NoteId;
use notebar_core::orchestrator::{Action, FeedbackEvent, Ledger, Orchestrator, OrchestratorError, Payload};
use notebar_core::router::features::FeatureSpec;
use notebar_core::router::model::{save_model, RouterModel};
use notebar_core::router::train::HyperParams;
use notebar_core::vault::store::{NoteFilter, NoteRecord, PredictedLabels, Vault, VaultError};
use notebar_core::vault::{load_with_fallback, persist, Embedder};
use notebar_core::{Kind, KindScores, Persona};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::client::client_from;
use crate::config::ServiceConfig;
use crate::ops::{self, GenerateRequest, GridChoice, OpError, TrainRequest};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: OpError,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl std::fmt::Display) -> Self {
        ApiError {
            status,
            error: OpError::new(code, message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.error }))).into_response()
    }
}

impl From<OpError> for ApiError {
    fn from(error: OpError) -> Self {
        let status = match error.code {
            "io" | "plot" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError { status, error }
    }
}

impl From<VaultError> for ApiError {
    fn from(e: VaultError) -> Self {
        let status = match e {
            VaultError::NotFound(_) => StatusCode::NOT_FOUND,
            VaultError::Conflict(_) => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, "vault", e)
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let (status, code) = match e {
            OrchestratorError::UnknownSuggestion(_) => (StatusCode::NOT_FOUND, "unknown_suggestion"),
            OrchestratorError::DoubleFeedback { .. } => (StatusCode::CONFLICT, "double_feedback"),
            OrchestratorError::InvalidEdit(_) | OrchestratorError::Policy(_) => {
                (StatusCode::BAD_REQUEST, "invalid_edit")
            }
            OrchestratorError::Ledger(_) => (StatusCode::INTERNAL_SERVER_ERROR, "ledger"),
        };
        ApiError::new(status, code, e)
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: &'static str,
    pub status: JobStatus,
    pub submitted_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub result: Option<Value>,
    pub error: Option<OpError>,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub vault: Vault,
    pub orchestrator: Orchestrator,
    dataset: RwLock<Option<Arc<Corpus>>>,
    jobs: Mutex<BTreeMap<String, JobRecord>>,
    next_job: AtomicU64,
    /// Held by the running job; serializes training, evaluation and sweeps.
    job_slot: Arc<Mutex<()>>,
    persist_lock: Mutex<()>,
}

/// All weights zero and every bias strongly negative: nothing is routed until
/// a model is trained or loaded.
pub fn untrained_model() -> RouterModel {
    let mut m = RouterModel::zeros(FeatureSpec::default());
    m.bias = KindScores::splat(-8.0);
    m
}

impl AppState {
    pub fn open(config: ServiceConfig) -> Result<Self, OpError> {
        let model = match &config.model_path {
            Some(p) if p.exists() => ops::read_model(p)?,
            _ => {
                tracing::warn!("no router model found; starting untrained");
                untrained_model()
            }
        };
        let vault = match &config.vault_path {
            Some(p) if p.exists() || notebar_core::vault::persist::previous_path(p).exists() => {
                let (v, err) = load_with_fallback(p).map_err(|e| OpError::new("vault", e))?;
                if let Some(err) = err {
                    tracing::warn!(error = %err, "vault snapshot unreadable; loaded previous snapshot");
                }
                v
            }
            _ => Vault::new(Embedder::from_model(&model)),
        };
        let ledger = match &config.ledger_path {
            Some(p) => Ledger::open(p).map_err(|e| OpError::new("ledger", e))?,
            None => Ledger::in_memory(),
        };
        let orchestrator = Orchestrator::new(model, ledger, config.feedback, config.artifacts.clone(), config.k)
            .map_err(|e| OpError::new("orchestrator", e))?;
        let dataset = match &config.dataset_path {
            Some(p) => {
                let loaded = ops::load_dataset(p, config.mapping_path.as_deref())?;
                if !loaded.errors.is_empty() {
                    tracing::warn!(rejected = loaded.errors.len(), "dataset records rejected at load");
                }
                Some(Arc::new(loaded.corpus))
            }
            None => None,
        };
        Ok(AppState {
            config,
            vault,
            orchestrator,
            dataset: RwLock::new(dataset),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            job_slot: Arc::new(Mutex::new(())),
            persist_lock: Mutex::new(()),
        })
    }

    pub fn dataset(&self) -> Option<Arc<Corpus>> {
        self.dataset.read().expect("dataset lock").clone()
    }

    fn set_dataset(&self, corpus: Corpus) {
        *self.dataset.write().expect("dataset lock") = Some(Arc::new(corpus));
    }

    fn require_dataset(&self) -> ApiResult<Arc<Corpus>> {
        self.dataset().ok_or_else(|| {
            ApiError::new(
                StatusCode::CONFLICT,
                "no_dataset",
                "no dataset loaded; generate or ingest one first",
            )
        })
    }

    fn persist_vault(&self) -> ApiResult<()> {
        if let Some(p) = &self.config.vault_path {
            let _g = self.persist_lock.lock().expect("persist lock");
            persist(&self.vault, p).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "persist", e))?;
        }
        Ok(())
    }

    fn ensure_model_registered(&self, version: u64) {
        if !self.vault.snapshot().model_versions.contains(&version) {
            self.vault.register_model_version(version);
        }
    }

    /// Install a freshly trained model and write it to the model path.
    fn install_model(&self, model: RouterModel) -> Result<u64, OpError> {
        let v = self
            .orchestrator
            .install_model(model)
            .map_err(|e| OpError::new("orchestrator", e))?;
        self.ensure_model_registered(v);
        if let Some(p) = &self.config.model_path {
            std::fs::write(p, save_model(&self.orchestrator.model())).map_err(|e| OpError::new("io", e))?;
        }
        Ok(v)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/notes", post(create_note).get(list_notes))
        .route("/notes/{id}", get(get_note))
        .route("/notes/{id}/suggestions", get(note_suggestions))
        .route("/route", post(route_note))
        .route("/feedback", post(feedback))
        .route("/kanban", get(kanban))
        .route("/calendar", get(calendar))
        .route("/train", post(submit_train))
        .route("/eval", post(submit_eval))
        .route("/sweep", post(submit_sweep))
        .route("/jobs/{id}", get(get_job))
        .route("/dataset/generate", post(dataset_generate))
        .route("/dataset/ingest", post(dataset_ingest))
        .route("/dataset/qa", post(dataset_qa))
        .route("/stats", get(stats))
        .with_state(state)
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Value> {
    let m = s.orchestrator.model();
    Json(json!({
        "status": "ok",
        "model_version": m.version,
        "vault_version": s.vault.version(),
        "notes": s.vault.snapshot().len(),
        "dataset_loaded": s.dataset().is_some(),
    }))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "task", e))?
}

#[derive(Debug, Deserialize)]
pub struct CreateNote {
    pub text: String,
    pub persona: Persona,
    pub id: Option<NoteId>,
}

async fn create_note(
    State(s): State<Arc<AppState>>,
    Json(req): Json<CreateNote>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    blocking(move || {
        let model = s.orchestrator.model();
        let out = ops::route(&model, &req.text, req.persona, req.id)?;
        s.ensure_model_registered(model.version);
        let predicted = PredictedLabels {
            labels: out.labels,
            model_version: model.version,
        };
        s.vault
            .put_note(NoteRecord::new(out.note.clone(), vec![], Some(predicted)))?;
        s.persist_vault()?;
        Ok((
            StatusCode::CREATED,
            Json(serde_json::to_value(&out).expect("route output serializes")),
        ))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    pub persona: Option<Persona>,
    pub kind: Option<Kind>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

async fn list_notes(State(s): State<Arc<AppState>>, Query(q): Query<ListQuery>) -> Json<Vec<NoteRecord>> {
    let filter = NoteFilter {
        persona: q.persona,
        kind: q.kind,
        from: q.from,
        to: q.to,
    };
    Json(s.vault.list_notes(&filter))
}

async fn get_note(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<NoteRecord>> {
    Ok(Json(s.vault.get_note(&NoteId::new(id))?))
}

async fn note_suggestions(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let snap = s.vault.snapshot();
        let record = snap.get(&NoteId::new(id))?;
        let out = s.orchestrator.suggest_for(&record.note, &snap)?;
        Ok(Json(serde_json::to_value(out).expect("suggestions serialize")))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct RouteRequest {
    pub text: String,
    pub persona: Persona,
}

async fn route_note(
    State(s): State<Arc<AppState>>,
    Json(req): Json<RouteRequest>,
) -> ApiResult<Json<ops::RouteOutput>> {
    let model = s.orchestrator.model();
    Ok(Json(ops::route(
        &model,
        &req.text,
        req.persona,
        Some(NoteId::new("route")),
    )?))
}

#[derive(Debug, Deserialize)]
pub struct FeedbackRequest {
    pub suggestion_id: String,
    pub action: Action,
    pub edited_payload: Option<Payload>,
}

async fn feedback(State(s): State<Arc<AppState>>, Json(req): Json<FeedbackRequest>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let out =
            s.orchestrator
                .record_feedback(FeedbackEvent::new(req.suggestion_id, req.action, req.edited_payload))?;
        Ok(Json(serde_json::to_value(out).expect("feedback outcome serializes")))
    })
    .await
}

async fn kanban(State(s): State<Arc<AppState>>) -> Json<Value> {
    Json(serde_json::to_value(s.orchestrator.kanban_board()).expect("board serializes"))
}

#[derive(Debug, Deserialize)]
pub struct CalendarQuery {
    pub date: NaiveDate,
}

async fn calendar(State(s): State<Arc<AppState>>, Query(q): Query<CalendarQuery>) -> Json<Value> {
    Json(json!({ "date": q.date, "events": s.orchestrator.calendar_day(q.date) }))
}

fn submit_job(
    s: &Arc<AppState>,
    kind: &'static str,
    work: impl FnOnce(&AppState) -> Result<Value, OpError> + Send + 'static,
) -> (StatusCode, Json<Value>) {
    let id = format!("j{:06}", s.next_job.fetch_add(1, Ordering::SeqCst));
    s.jobs.lock().expect("jobs lock").insert(
        id.clone(),
        JobRecord {
            id: id.clone(),
            kind,
            status: JobStatus::Queued,
            submitted_at: Utc::now(),
            finished_at: None,
            result: None,
            error: None,
        },
    );
    let state = s.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || {
        let slot = state.job_slot.clone();
        let _running = slot.lock().unwrap_or_else(|p| p.into_inner());
        state.update_job(&job_id, |j| j.status = JobStatus::Running);
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| work(&state)))
            .unwrap_or_else(|_| Err(OpError::new("panic", "job panicked")));
        state.update_job(&job_id, |j| {
            j.finished_at = Some(Utc::now());
            match outcome {
                Ok(v) => {
                    j.status = JobStatus::Succeeded;
                    j.result = Some(v);
                }
                Err(e) => {
                    j.status = JobStatus::Failed;
                    j.error = Some(e);
                }
            }
        });
    });
    (
        StatusCode::ACCEPTED,
        Json(json!({ "job_id": id, "status": JobStatus::Queued })),
    )
}

impl AppState {
    fn update_job(&self, id: &str, f: impl FnOnce(&mut JobRecord)) {
        if let Some(j) = self.jobs.lock().expect("jobs lock").get_mut(id) {
            f(j);
        }
    }

    pub fn job(&self, id: &str) -> Option<JobRecord> {
        self.jobs.lock().expect("jobs lock").get(id).cloned()
    }
}

async fn submit_train(
    State(s): State<Arc<AppState>>,
    body: Option<Json<TrainRequest>>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let corpus = s.require_dataset()?;
    Ok(submit_job(&s, "train", move |st| {
        let outcome = ops::train_and_evaluate(&corpus, &req)?;
        let version = st.install_model(outcome.model.clone())?;
        let mut v = serde_json::to_value(&outcome).expect("outcome serializes");
        v["model_version"] = json!(version);
        Ok(v)
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct EvalRequest {
    pub split: SplitSpec,
    /// Line-delimited external probabilities to score instead of the model.
    pub probabilities_path: Option<PathBuf>,
}

async fn submit_eval(
    State(s): State<Arc<AppState>>,
    body: Option<Json<EvalRequest>>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let corpus = s.require_dataset()?;
    Ok(submit_job(&s, "eval", move |st| {
        let model = st.orchestrator.model();
        let external = req
            .probabilities_path
            .as_deref()
            .map(ops::read_probabilities)
            .transpose()?;
        let out = ops::evaluate(&corpus, &req.split, Some(&model), external.as_ref())?;
        Ok(serde_json::to_value(out).expect("eval serializes"))
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct SweepRequest {
    pub grid: GridChoice,
    pub base: HyperParams,
    pub split: SplitSpec,
    pub features: FeatureSpec,
    /// Directory for CSV, JSON and SVG outputs.
    pub out_dir: Option<PathBuf>,
}

async fn submit_sweep(
    State(s): State<Arc<AppState>>,
    body: Option<Json<SweepRequest>>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let grid = ops::resolve_grid(&req.grid)?;
    let corpus = s.require_dataset()?;
    Ok(submit_job(&s, "sweep", move |_| {
        let out = ops::sweep(
            &corpus,
            &grid,
            &req.base,
            &req.split,
            &req.features,
            req.out_dir.as_deref(),
        )?;
        Ok(serde_json::to_value(out).expect("sweep serializes"))
    }))
}

async fn get_job(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    s.job(&id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_job", format!("job {id} not found")))
}

async fn dataset_generate(
    State(s): State<Arc<AppState>>,
    body: Option<Json<GenerateRequest>>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    blocking(move || {
        let client = if req.use_client {
            Some(client_from(&s.config.client).map_err(|e| OpError::new("client", e))?)
        } else {
            None
        };
        let g = ops::generate(&req, client.as_deref())?;
        let stats = corpus_stats(&g.corpus);
        s.set_dataset(g.corpus);
        Ok((
            StatusCode::CREATED,
            Json(json!({ "qa": g.qa.map(|q| q.counts), "stats": stats })),
        ))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct IngestRequest {
    /// Server-side file to read.
    pub path: Option<PathBuf>,
    /// Inline records, one JSON object per line or a JSON array.
    pub text: Option<String>,
    pub mapping: Option<FieldMapping>,
}

async fn dataset_ingest(
    State(s): State<Arc<AppState>>,
    Json(req): Json<IngestRequest>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    blocking(move || {
        let mapping = req.mapping.unwrap_or_default();
        let text = match (req.path, req.text) {
            (Some(p), None) => {
                std::fs::read_to_string(&p).map_err(|e| OpError::new("io", format!("{}: {e}", p.display())))?
            }
            (None, Some(t)) => t,
            _ => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "usage",
                    "give exactly one of path or text",
                ))
            }
        };
        let loaded = ops::load_dataset_str(&text, &mapping)?;
        let stats = corpus_stats(&loaded.corpus);
        let body = json!({ "records": loaded.records, "errors": loaded.errors, "stats": stats });
        s.set_dataset(loaded.corpus);
        Ok((StatusCode::CREATED, Json(body)))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct QaRequest {
    pub config: QaConfig,
    /// Run the consistency stage through the configured text client.
    pub stage2: bool,
}

async fn dataset_qa(State(s): State<Arc<AppState>>, body: Option<Json<QaRequest>>) -> ApiResult<Json<Value>> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let corpus = s.require_dataset()?;
    blocking(move || {
        let mut corpus = (*corpus).clone();
        let client = if req.stage2 {
            Some(client_from(&s.config.client).map_err(|e| OpError::new("client", e))?)
        } else {
            None
        };
        let summary = ops::run_qa(&mut corpus, client.as_deref(), &req.config)?;
        s.set_dataset(corpus);
        Ok(Json(serde_json::to_value(summary).expect("qa summary serializes")))
    })
    .await
}

/// Statistics of the working dataset, or of the vault's notes when no
/// dataset is loaded.
async fn stats(State(s): State<Arc<AppState>>) -> Json<Value> {
    let (source, stats) = match s.dataset() {
        Some(c) => ("dataset", corpus_stats(&c)),
        None => {
            let entries: Vec<CorpusEntry> = s
                .vault
                .list_notes(&NoteFilter::default())
                .into_iter()
                .map(|r| CorpusEntry::new(r.note, r.concepts))
                .collect();
            ("vault", corpus_stats(&entries))
        }
    };
    Json(json!({ "source": source, "stats": stats }))
}

pub async fn serve(config: ServiceConfig) -> Result<(), OpError> {
    let bind = config.bind;
    let state = Arc::new(
        tokio::task::spawn_blocking(move || AppState::open(config))
            .await
            .map_err(|e| OpError::new("task", e))??,
    );
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| OpError::new("io", e))?;
    tracing::info!(%bind, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| OpError::new("io", e))
}
