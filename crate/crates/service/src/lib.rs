//! HTTP front end for the refinement loop: translate an utterance, let the
//! operator confirm or correct it, learn from the answer, and preview the
//! deployment.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nile_core::anonymizer::AnonymizeError;
use nile_core::deployer::{compile, CompileError, ConflictReport, NetworkModel};
use nile_core::experiment::evaluate;
use nile_core::extractor::{EntitySet, ExtractError};
use nile_core::nile::{render_nile, NileIntent};
use nile_core::pipeline::{Candidate, CorrectionError, Pipeline, PipelineError};
use nile_core::translator::{append_example, read_dataset, Seq2SeqModel, TrainingExample};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub weights: PathBuf,
    pub dataset: PathBuf,
    /// Network model file; the bundled two-switch scenario when absent.
    pub network: Option<PathBuf>,
    pub session_log: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub train_on_feedback: bool,
    pub intent_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    AwaitingConfirmation,
    Confirmed,
    Corrected,
    Deployed,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Session {
    pub id: String,
    pub utterance: String,
    pub entities: EntitySet,
    pub nile_text: String,
    pub status: Status,
    #[serde(skip)]
    candidate: Candidate,
    /// Program the operator accepted, possibly edited.
    #[serde(skip)]
    accepted: Option<NileIntent>,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct Metrics {
    pub dataset_size: usize,
    pub last_train_loss: Option<f64>,
    pub feedback_count: usize,
    pub mean_r2_last_eval: Option<f64>,
}

pub struct AppState {
    config: ServiceConfig,
    pipeline: Pipeline,
    network: NetworkModel,
    model: RwLock<Arc<Seq2SeqModel>>,
    dataset: Mutex<Vec<TrainingExample>>,
    sessions: Mutex<HashMap<String, Session>>,
    metrics: Mutex<Metrics>,
    trainer: Mutex<()>,
    pending: AtomicUsize,
    log: Mutex<Option<File>>,
}

impl AppState {
    /// Loads weights, the training database and the network model.
    pub fn open(config: ServiceConfig) -> anyhow::Result<Arc<Self>> {
        let model = Seq2SeqModel::load(&config.weights)
            .with_context(|| format!("loading weights from {} (train a model first)", config.weights.display()))?;
        let dataset = if config.dataset.exists() {
            read_dataset(&config.dataset).with_context(|| format!("reading {}", config.dataset.display()))?
        } else {
            Vec::new()
        };
        let network = match &config.network {
            Some(path) => NetworkModel::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => NetworkModel::iperf_fixture(),
        };
        let log = match &config.session_log {
            Some(path) => Some(OpenOptions::new().create(true).append(true).open(path)?),
            None => None,
        };
        let pipeline = Pipeline {
            intent_name: config.intent_name.clone(),
            ..Pipeline::default()
        };
        Ok(Arc::new(Self {
            metrics: Mutex::new(Metrics {
                dataset_size: dataset.len(),
                ..Metrics::default()
            }),
            config,
            pipeline,
            network,
            model: RwLock::new(Arc::new(model)),
            dataset: Mutex::new(dataset),
            sessions: Mutex::new(HashMap::new()),
            trainer: Mutex::new(()),
            pending: AtomicUsize::new(0),
            log: Mutex::new(log),
        }))
    }

    pub fn model(&self) -> Arc<Seq2SeqModel> {
        self.model.read().unwrap().clone()
    }

    pub fn metrics(&self) -> Metrics {
        self.metrics.lock().unwrap().clone()
    }

    /// Resolves once no fine-tuning job is queued or running.
    pub async fn wait_idle(&self) {
        while self.pending.load(Ordering::SeqCst) > 0 {
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    fn record(&self, session: &Session, event: &str) {
        let mut log = self.log.lock().unwrap();
        if let Some(file) = log.as_mut() {
            let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let line = json!({
                "ts": ts,
                "event": event,
                "session": session.id,
                "status": session.status,
                "utterance": session.utterance,
                "nile": session.accepted.as_ref().map(render_nile).unwrap_or_else(|| session.nile_text.clone()),
            });
            if let Err(e) = writeln!(file, "{line}") {
                tracing::warn!("session log write failed: {e}");
            }
        }
    }

    /// Fine-tunes a copy of the model for one epoch over the whole
    /// database, then swaps it in. Jobs run one at a time.
    fn schedule_training(self: &Arc<Self>) {
        self.pending.fetch_add(1, Ordering::SeqCst);
        let state = self.clone();
        tokio::task::spawn_blocking(move || {
            {
                let _guard = state.trainer.lock().unwrap();
                let snapshot = state.dataset.lock().unwrap().clone();
                let mut model = (*state.model()).clone();
                match model.fine_tune(&snapshot, 1) {
                    Ok(report) => {
                        if let Err(e) = model.save(&state.config.weights) {
                            tracing::error!("saving weights failed: {e}");
                        }
                        *state.model.write().unwrap() = Arc::new(model);
                        state.metrics.lock().unwrap().last_train_loss = report.final_train_loss();
                        tracing::info!(examples = snapshot.len(), "fine-tuned on feedback");
                    }
                    Err(e) => tracing::error!("fine-tuning failed: {e}"),
                }
            }
            state.pending.fetch_sub(1, Ordering::SeqCst);
        });
    }
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl std::fmt::Display) -> Self {
        Self {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

const GUIDANCE: &str = "I could not find any network entities in that request. \
Try naming middleboxes, endpoints, QoS targets, traffic or a time window, \
e.g. \"add a firewall from the gateway to the backend\".";

#[derive(Deserialize)]
struct IntentRequest {
    utterance: String,
}

#[derive(Serialize)]
struct IntentResponse {
    session_id: String,
    entities: EntitySet,
    nile_text: String,
    warnings: Vec<String>,
}

async fn create_intent(
    State(state): State<Arc<AppState>>,
    Json(req): Json<IntentRequest>,
) -> Result<Json<IntentResponse>, ApiError> {
    let model = state.model();
    let candidate = match state.pipeline.refine(&req.utterance, &model) {
        Ok(c) => c,
        Err(PipelineError::Extract(e @ (ExtractError::EmptyExtraction | ExtractError::EmptyUtterance))) => {
            return Err(ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": e.to_string(), "guidance": GUIDANCE }),
            });
        }
        Err(PipelineError::Anonymize(e @ AnonymizeError::TooManyRepeats(_))) => {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e));
        }
        Err(e) => {
            tracing::error!(utterance = %req.utterance, "translation failed: {e}");
            return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e));
        }
    };
    let session = Session {
        id: uuid::Uuid::new_v4().simple().to_string(),
        utterance: req.utterance,
        entities: candidate.entities.clone(),
        nile_text: candidate.nile_text.clone(),
        status: Status::AwaitingConfirmation,
        candidate,
        accepted: None,
    };
    state.record(&session, "created");
    let response = IntentResponse {
        session_id: session.id.clone(),
        entities: session.entities.clone(),
        nile_text: session.nile_text.clone(),
        warnings: session.candidate.warnings.clone(),
    };
    state.sessions.lock().unwrap().insert(session.id.clone(), session);
    Ok(Json(response))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Session>, ApiError> {
    state
        .sessions
        .lock()
        .unwrap()
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))
}

#[derive(Deserialize, Default)]
struct ConfirmRequest {
    corrected_nile: Option<String>,
}

async fn confirm(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let req: ConfirmRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ConfirmRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?
    };
    let model = state.model();
    let mut sessions = state.sessions.lock().unwrap();
    let session = sessions
        .get_mut(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))?;
    if session.status != Status::AwaitingConfirmation {
        return Err(ApiError::new(StatusCode::CONFLICT, "session was already answered"));
    }

    let (example, status, accepted) = match req.corrected_nile.as_deref() {
        None => (Pipeline::confirmation(&session.candidate), Status::Confirmed, session.candidate.intent.clone()),
        Some(text) => match Pipeline::correction(&session.candidate, text, &model) {
            Ok(example) => {
                let intent = nile_core::nile::parse_nile(text).expect("correction parsed");
                let status = if render_nile(&intent) == session.nile_text {
                    Status::Confirmed
                } else {
                    Status::Corrected
                };
                (example, status, intent)
            }
            Err(CorrectionError::Parse(e)) => {
                return Err(ApiError {
                    status: StatusCode::BAD_REQUEST,
                    body: json!({
                        "error": e.to_string(),
                        "line": e.line,
                        "column": e.column,
                        "expected": e.expected,
                        "found": e.found,
                    }),
                });
            }
            Err(e) => return Err(ApiError::new(StatusCode::BAD_REQUEST, e)),
        },
    };

    append_example(&state.config.dataset, &example).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    let dataset_size = {
        let mut data = state.dataset.lock().unwrap();
        data.push(example);
        data.len()
    };
    {
        let mut m = state.metrics.lock().unwrap();
        m.dataset_size = dataset_size;
        m.feedback_count += 1;
    }
    session.status = status;
    session.accepted = Some(accepted);
    state.record(session, "answered");
    drop(sessions);
    if state.config.train_on_feedback {
        state.schedule_training();
    }
    Ok(Json(json!({ "status": status, "dataset_size": dataset_size })))
}

#[derive(Serialize)]
struct DeployResponse {
    commands: String,
    conflicts: ConflictReport,
    deployable: bool,
}

async fn deploy(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<DeployResponse>, ApiError> {
    let mut sessions = state.sessions.lock().unwrap();
    let session = sessions
        .get_mut(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))?;
    let intent = match (session.status, &session.accepted) {
        (Status::Confirmed | Status::Corrected, Some(intent)) => intent.clone(),
        _ => return Err(ApiError::new(StatusCode::CONFLICT, "confirm the intent before deploying it")),
    };
    let compiled = compile(&intent, &state.network).map_err(|e| match e {
        CompileError::UnresolvedId(_) | CompileError::Invalid(_) | CompileError::PoolExhausted { .. } => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e)
        }
    })?;
    let deployable = compiled.deployable();
    session.status = if deployable { Status::Deployed } else { Status::Failed };
    state.record(session, "deployed");
    Ok(Json(DeployResponse {
        commands: compiled.script(),
        conflicts: compiled.report,
        deployable,
    }))
}

async fn metrics(State(state): State<Arc<AppState>>) -> Json<Metrics> {
    Json(state.metrics())
}

#[derive(Deserialize)]
struct EvalRequest {
    examples: Vec<TrainingExample>,
}

async fn eval(State(state): State<Arc<AppState>>, Json(req): Json<EvalRequest>) -> Result<Json<serde_json::Value>, ApiError> {
    if req.examples.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "no examples to evaluate"));
    }
    let model = state.model();
    let report = tokio::task::spawn_blocking(move || evaluate(&model, &req.examples))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    let mean = report.summary.mean.is_finite().then_some(report.summary.mean);
    state.metrics.lock().unwrap().mean_r2_last_eval = mean;
    Ok(Json(json!({
        "n": report.summary.n,
        "mean_r2": mean,
        "ci95_half_width": report.summary.ci95,
        "exact_rate": report.exact_rate,
    })))
}

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/intent", post(create_intent))
        .route("/intent/{id}", get(get_session))
        .route("/intent/{id}/confirm", post(confirm))
        .route("/intent/{id}/deploy", post(deploy))
        .route("/metrics", get(metrics))
        .route("/eval", post(eval))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
