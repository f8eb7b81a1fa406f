//! HTTP/JSON API under `/api/v1`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
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
use clap::Args;
use evrec_core::dataio::{
    build_samples, load_bundle, load_model, save_report, to_decimal_json, DatasetBundle, ModelFile,
};
use evrec_core::experiments::{run_protocol, ExperimentReport, Fraction, SplitMode, SplitPlan};
use evrec_core::model::{EventId, UserId};
use evrec_core::presets;
use evrec_core::regression::{AssumptionSpec, Regime, Sample, DEFAULT_RIDGE, DEFAULT_THRESHOLDS};
use evrec_core::scoring::{features, Attribute, Features, LinearForm, ScoringError, ScoringFunction};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::run::{now, RunRecord, RunStatus};
use crate::view::rank_view;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Dataset served by the ranking endpoints and used as the training pool.
    #[arg(long, env = "EVREC_DATA_DIR")]
    pub data: PathBuf,
    /// Held-out test pool for training runs.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Directory of model files to serve next to the presets.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Where training runs write their report and run record.
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub detail: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_owned(),
            message: message.into(),
            detail: serde_json::Value::Null,
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
            .with_detail(serde_json::json!({ "kind": what, "id": id }))
    }

    fn invalid(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let status = r.status();
        let status = if status == StatusCode::BAD_REQUEST || status.is_server_error() {
            StatusCode::BAD_REQUEST
        } else {
            status
        };
        Self::new(status, "invalid_body", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status;
        (status, DecimalJson(self)).into_response()
    }
}

/// JSON body rendered through [`to_decimal_json`].
pub struct DecimalJson<T>(pub T);

impl<T: Serialize> IntoResponse for DecimalJson<T> {
    fn into_response(self) -> Response {
        (
            [(header::CONTENT_TYPE, "application/json")],
            to_decimal_json(&self.0),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<DecimalJson<T>, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Preset,
    File,
    Trained,
}

#[derive(Debug, Clone, Serialize)]
pub struct StoredModel {
    pub source: ModelSource,
    #[serde(flatten)]
    pub model: ModelFile,
}

struct RunEntry {
    record: RunRecord,
    report: Option<ExperimentReport>,
}

struct Job {
    run_id: String,
    specs: Vec<AssumptionSpec>,
    plan: SplitPlan,
}

pub struct AppState {
    bundle: DatasetBundle,
    train_pool: Vec<Sample>,
    test_pool: Vec<Sample>,
    models: RwLock<Arc<BTreeMap<String, StoredModel>>>,
    runs: RwLock<BTreeMap<String, RunEntry>>,
    next_run: AtomicU64,
    runs_dir: Option<PathBuf>,
    jobs: mpsc::UnboundedSender<Job>,
}

impl AppState {
    /// Builds the state and starts the training worker, which runs queued
    /// jobs one at a time in submission order. Must be called inside a
    /// Tokio runtime.
    pub fn start(
        bundle: DatasetBundle,
        test_pool: Vec<Sample>,
        extra_models: Vec<ModelFile>,
        runs_dir: Option<PathBuf>,
    ) -> Arc<Self> {
        let mut models = BTreeMap::new();
        for (id, f) in presets::all() {
            let model = ModelFile::new(id, f, bundle.config.scoring.clone());
            models.insert(id.to_owned(), StoredModel { source: ModelSource::Preset, model });
        }
        for model in extra_models {
            models.insert(model.id.clone(), StoredModel { source: ModelSource::File, model });
        }
        let train_pool = build_samples(&bundle).samples;
        let (tx, rx) = mpsc::unbounded_channel();
        let state = Arc::new(Self {
            bundle,
            train_pool,
            test_pool,
            models: RwLock::new(Arc::new(models)),
            runs: RwLock::new(BTreeMap::new()),
            next_run: AtomicU64::new(1),
            runs_dir,
            jobs: tx,
        });
        tokio::spawn(worker(Arc::clone(&state), rx));
        state
    }

    fn models(&self) -> Arc<BTreeMap<String, StoredModel>> {
        Arc::clone(&self.models.read().expect("model lock"))
    }

    fn add_models(&self, new: Vec<ModelFile>) {
        let mut guard = self.models.write().expect("model lock");
        let mut next = BTreeMap::clone(&guard);
        for model in new {
            next.insert(model.id.clone(), StoredModel { source: ModelSource::Trained, model });
        }
        *guard = Arc::new(next);
    }

    fn update_run(&self, id: &str, f: impl FnOnce(&mut RunEntry)) {
        if let Some(e) = self.runs.write().expect("run lock").get_mut(id) {
            f(e);
        }
    }
}

async fn worker(state: Arc<AppState>, mut rx: mpsc::UnboundedReceiver<Job>) {
    while let Some(job) = rx.recv().await {
        state.update_run(&job.run_id, |e| {
            e.record.status = RunStatus::Running;
            e.record.started_at = Some(now());
        });
        let st = Arc::clone(&state);
        let specs = job.specs.clone();
        let plan = job.plan.clone();
        let outcome = tokio::task::spawn_blocking(move || run_protocol(&st.train_pool, &st.test_pool, &specs, &plan))
            .await;
        let report = match outcome {
            Ok(Ok(r)) => Ok(r),
            Ok(Err(e)) => Err(e.to_string()),
            Err(e) => Err(format!("training task aborted: {e}")),
        };
        finish_run(&state, &job.run_id, report);
    }
}

fn finish_run(state: &AppState, run_id: &str, report: Result<ExperimentReport, String>) {
    let (models, report, error) = match report {
        Ok(report) => {
            let models = crate::averaged_models(&report, run_id, &state.bundle.config.scoring);
            let error = models
                .is_empty()
                .then(|| "no regime could be fitted on any split".to_owned());
            (models, Some(report), error)
        }
        Err(e) => (Vec::new(), None, Some(e)),
    };
    let mut report_file = None;
    if let (Some(dir), Some(r)) = (&state.runs_dir, &report) {
        let path = dir.join(run_id).join("report.json");
        match save_report(&path, r) {
            Ok(()) => report_file = Some(path.display().to_string()),
            Err(e) => eprintln!("warning: {e}"),
        }
    }
    let ids: Vec<String> = models.iter().map(|m| m.id.clone()).collect();
    state.add_models(models);
    let mut record = None;
    state.update_run(run_id, |e| {
        e.record.finished_at = Some(now());
        e.record.models = ids;
        e.record.report_file = report_file;
        e.record.status = if error.is_none() {
            RunStatus::Completed
        } else {
            RunStatus::Failed
        };
        e.record.error = error;
        e.report = report;
        record = Some(e.record.clone());
    });
    if let (Some(dir), Some(rec)) = (&state.runs_dir, record) {
        let path = dir.join(run_id).join("run.json");
        if let Err(e) = std::fs::create_dir_all(dir.join(run_id)).and_then(|()| std::fs::write(&path, to_decimal_json(&rec))) {
            eprintln!("warning: writing {}: {e}", path.display());
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/events", get(list_events))
        .route("/api/v1/users/{id}/factors", get(user_factors))
        .route("/api/v1/rank", post(rank))
        .route("/api/v1/models", get(list_models))
        .route("/api/v1/models/{id}", get(get_model))
        .route("/api/v1/train", post(train))
        .route("/api/v1/runs/{id}", get(get_run))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

async fn list_events(State(s): State<Arc<AppState>>) -> DecimalJson<serde_json::Value> {
    DecimalJson(serde_json::json!({ "events": s.bundle.events }))
}

#[derive(Debug, Serialize)]
struct EventFactors {
    event_id: EventId,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<Features>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ScoringError>,
}

#[derive(Debug, Serialize)]
struct UserFactors {
    user_id: UserId,
    events: Vec<EventFactors>,
}

async fn user_factors(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<UserFactors> {
    let user = s
        .bundle
        .user(&UserId::new(&id))
        .ok_or_else(|| ApiError::not_found("user", &id))?;
    let events = s
        .bundle
        .events
        .iter()
        .map(|o| match features(user, o, &s.bundle.config.scoring) {
            Ok(f) => EventFactors {
                event_id: o.id().clone(),
                features: Some(f),
                error: None,
            },
            Err(e) => EventFactors {
                event_id: o.id().clone(),
                features: None,
                error: Some(e),
            },
        })
        .collect();
    Ok(DecimalJson(UserFactors {
        user_id: user.id().clone(),
        events,
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub thi: Option<f64>,
    pub tyi: Option<f64>,
    pub rat: Option<f64>,
    pub rch: Option<f64>,
    pub frn: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankRequest {
    pub user_id: String,
    pub weights: Option<Weights>,
    pub intercept: Option<f64>,
    pub model_id: Option<String>,
}

fn weights_function(w: &Weights, intercept: f64) -> Result<ScoringFunction, ApiError> {
    let pairs = [
        (Attribute::Thi, w.thi),
        (Attribute::Tyi, w.tyi),
        (Attribute::Rat, w.rat),
        (Attribute::Rch, w.rch),
        (Attribute::Frn, w.frn),
    ];
    let coefficients: BTreeMap<Attribute, f64> = pairs.into_iter().filter_map(|(a, w)| Some((a, w?))).collect();
    if coefficients.is_empty() {
        return Err(ApiError::invalid("invalid_weights", "at least one weight must be present"));
    }
    if let Some((a, _)) = coefficients.iter().find(|(_, w)| !w.is_finite()) {
        return Err(ApiError::invalid("invalid_weights", format!("weight `{a}` is not finite")));
    }
    if !intercept.is_finite() {
        return Err(ApiError::invalid("invalid_weights", "intercept is not finite"));
    }
    Ok(ScoringFunction::Linear(LinearForm::new(intercept, coefficients)))
}

async fn rank(
    State(s): State<Arc<AppState>>,
    body: Result<Json<RankRequest>, JsonRejection>,
) -> ApiResult<crate::view::RankView> {
    let Json(req) = body?;
    let function = match (&req.weights, &req.model_id) {
        (Some(_), Some(_)) => {
            return Err(ApiError::invalid(
                "invalid_weights",
                "give either `weights` or `model_id`, not both",
            ))
        }
        (None, Some(id)) => {
            if req.intercept.is_some() {
                return Err(ApiError::invalid("invalid_weights", "`intercept` only applies to `weights`"));
            }
            s.models()
                .get(id)
                .ok_or_else(|| ApiError::not_found("model", id))?
                .model
                .function
                .clone()
        }
        (w, None) => weights_function(w.as_ref().unwrap_or(&Weights::default()), req.intercept.unwrap_or(0.0))?,
    };
    let user = s
        .bundle
        .user(&UserId::new(&req.user_id))
        .ok_or_else(|| ApiError::not_found("user", &req.user_id))?;
    Ok(DecimalJson(rank_view(&s.bundle, user, &function)))
}

async fn list_models(State(s): State<Arc<AppState>>) -> DecimalJson<serde_json::Value> {
    let models = s.models();
    let list: Vec<&StoredModel> = models.values().collect();
    DecimalJson(serde_json::json!({ "models": list }))
}

async fn get_model(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<StoredModel> {
    s.models()
        .get(&id)
        .cloned()
        .map(DecimalJson)
        .ok_or_else(|| ApiError::not_found("model", &id))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub regimes: Vec<String>,
    pub splits: Option<usize>,
    pub seed: Option<u64>,
    pub thresholds: Option<Vec<f64>>,
    pub ridge: Option<f64>,
    pub attribute_selection: Option<bool>,
    pub per_user: Option<bool>,
    pub train_fraction: Option<String>,
}

#[derive(Debug, Serialize)]
struct Accepted {
    run_id: String,
    status: RunStatus,
}

async fn train(
    State(s): State<Arc<AppState>>,
    body: Result<Json<TrainRequest>, JsonRejection>,
) -> Result<(StatusCode, DecimalJson<Accepted>), ApiError> {
    let Json(req) = body?;
    if req.regimes.is_empty() {
        return Err(ApiError::invalid("invalid_request", "`regimes` must not be empty"));
    }
    let mut regimes: Vec<Regime> = Vec::new();
    for name in &req.regimes {
        let r: Regime = name
            .parse()
            .map_err(|e: evrec_core::regression::UnknownRegime| ApiError::invalid("unknown_regime", e.to_string()))?;
        if !regimes.contains(&r) {
            regimes.push(r);
        }
    }
    let specs: Vec<AssumptionSpec> = regimes
        .iter()
        .map(|&regime| AssumptionSpec {
            regime,
            thresholds: req.thresholds.clone().unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec()),
            ridge: req.ridge.unwrap_or(DEFAULT_RIDGE),
            attribute_selection: req.attribute_selection.unwrap_or(false),
        })
        .collect();
    for spec in &specs {
        spec.validate(&s.bundle.config.scoring.score)
            .map_err(|e| ApiError::invalid("invalid_request", e.to_string()))?;
    }
    let mut plan = SplitPlan::new(req.seed.unwrap_or(0));
    if let Some(n) = req.splits {
        plan.n_splits = n;
    }
    if let Some(f) = &req.train_fraction {
        plan.train_fraction = f
            .parse::<Fraction>()
            .map_err(|e| ApiError::invalid("invalid_request", e.to_string()))?;
    }
    if req.per_user.unwrap_or(false) {
        plan.mode = SplitMode::PerUser;
    }
    plan.validate()
        .map_err(|e| ApiError::invalid("invalid_request", e.to_string()))?;

    let run_id = format!("run-{:04}", s.next_run.fetch_add(1, Ordering::SeqCst));
    let record = RunRecord::queued(run_id.clone(), regimes, plan.seed, plan.n_splits);
    s.runs.write().expect("run lock").insert(
        run_id.clone(),
        RunEntry {
            record,
            report: None,
        },
    );
    s.jobs
        .send(Job {
            run_id: run_id.clone(),
            specs,
            plan,
        })
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "worker_stopped", "training worker is not running"))?;
    Ok((
        StatusCode::ACCEPTED,
        DecimalJson(Accepted {
            run_id,
            status: RunStatus::Queued,
        }),
    ))
}

#[derive(Debug, Serialize)]
struct RunView {
    #[serde(flatten)]
    record: RunRecord,
    report: Option<ExperimentReport>,
}

async fn get_run(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<RunView> {
    let runs = s.runs.read().expect("run lock");
    let e = runs.get(&id).ok_or_else(|| ApiError::not_found("run", &id))?;
    Ok(DecimalJson(RunView {
        record: e.record.clone(),
        report: e.report.clone(),
    }))
}

fn load_models_dir(dir: &Path) -> anyhow::Result<Vec<ModelFile>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_model(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

pub fn serve(args: ServeArgs) -> anyhow::Result<std::process::ExitCode> {
    let bundle = load_bundle(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    let test_pool = match &args.test {
        Some(d) => build_samples(&load_bundle(d).with_context(|| format!("loading {}", d.display()))?).samples,
        None => Vec::new(),
    };
    let extra = match &args.models {
        Some(d) => load_models_dir(d)?,
        None => Vec::new(),
    };
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| crate::cli::UsageError(format!("invalid address: {e}")))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let state = AppState::start(bundle, test_pool, extra, args.runs_dir);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{addr}/api/v1");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    Ok(std::process::ExitCode::SUCCESS)
}
