use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::records::{BenchRecord, BenchStatus, RunRecord, RunStatus};
use super::store::{content_id, DatasetMeta, DatasetOrigin};
use super::{now, AppState};
use crate::actor::{LoadedDataset, Mode};
use crate::bench::SuiteConfig;
use crate::pipeline::QueryConfig;
use crate::planner::PlannerConfig;
use crate::table::{load_csv, validate};

const MAX_UPLOAD_BYTES: usize = 512 * 1024 * 1024;
const DEFAULT_PAGE: usize = 50;
const MAX_PAGE: usize = 500;

pub struct ApiError {
    status: StatusCode,
    message: String,
    details: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            details: Vec::new(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "details": self.details });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route(
            "/v1/datasets",
            post(upload_dataset)
                .get(list_datasets)
                .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES)),
        )
        .route("/v1/datasets/load", post(load_dataset))
        .route("/v1/datasets/{id}", get(get_dataset))
        .route("/v1/query", post(submit_query))
        .route("/v1/runs", get(list_runs))
        .route("/v1/runs/{id}", get(get_run))
        .route("/v1/runs/{id}/result.csv", get(get_result_csv))
        .route("/v1/bench/run", post(submit_bench))
        .route("/v1/bench/reports", get(list_reports))
        .route("/v1/bench/reports/{id}", get(get_report))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct UploadParams {
    kb: String,
}

async fn upload_dataset(
    State(state): State<AppState>,
    Query(params): Query<UploadParams>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<DatasetMeta>)> {
    let kb = state
        .inner
        .kbs
        .get(&params.kb)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("unknown KB {:?}", params.kb)))?;
    let id = content_id(&[params.kb.as_bytes(), &body]);
    if let Some(meta) = state.inner.datasets.meta(&id) {
        return Ok((StatusCode::OK, Json(meta)));
    }
    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        let table = load_csv(&body[..], &kb.schema)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("cannot load CSV: {e}")))?;
        let violations = validate(&table);
        if !violations.is_empty() {
            return Err(ApiError {
                status: StatusCode::BAD_REQUEST,
                message: format!("table has {} violation(s)", violations.len()),
                details: violations.iter().map(ToString::to_string).collect(),
            });
        }
        let meta = DatasetMeta {
            dataset_id: id,
            kb: params.kb,
            origin: DatasetOrigin::Csv,
            rows: table.row_count(),
            columns: table.schema().fields().len(),
            created_at: now(),
        };
        worker
            .inner
            .datasets
            .insert(meta.clone(), Some(&body), LoadedDataset { table, kb })
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok((StatusCode::CREATED, Json(meta)))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Deserialize)]
struct LoadRequest {
    loader: String,
    source: String,
}

/// Registers a dataset produced by a named loader, e.g. `synthetic` with
/// source `7` or `7:1000`.
async fn load_dataset(
    State(state): State<AppState>,
    Json(req): Json<LoadRequest>,
) -> ApiResult<(StatusCode, Json<DatasetMeta>)> {
    let loader = state
        .inner
        .loaders
        .resolve(&req.loader)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let id = content_id(&[b"loader", req.loader.as_bytes(), req.source.as_bytes()]);
    if let Some(meta) = state.inner.datasets.meta(&id) {
        return Ok((StatusCode::OK, Json(meta)));
    }
    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        let data = loader
            .load(&req.source)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
        let meta = DatasetMeta {
            dataset_id: id,
            kb: format!("loader:{}", req.loader),
            rows: data.table.row_count(),
            columns: data.table.schema().fields().len(),
            origin: DatasetOrigin::Loader {
                loader: req.loader,
                source: req.source,
            },
            created_at: now(),
        };
        worker
            .inner
            .datasets
            .insert(meta.clone(), None, data)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok((StatusCode::CREATED, Json(meta)))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn list_datasets(State(state): State<AppState>) -> Json<Vec<DatasetMeta>> {
    Json(state.inner.datasets.list())
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DatasetMeta>> {
    state
        .inner
        .datasets
        .meta(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("dataset", &id))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    dataset_id: String,
    question: String,
    k_shot: Option<usize>,
    n_samples: Option<usize>,
    mode: Option<Mode>,
    max_retries: Option<u32>,
}

async fn submit_query(
    State(state): State<AppState>,
    Json(req): Json<QueryRequest>,
) -> ApiResult<(StatusCode, Json<RunRecord>)> {
    if state.inner.datasets.meta(&req.dataset_id).is_none() {
        return Err(ApiError::not_found("dataset", &req.dataset_id));
    }
    let question = req.question.trim().to_string();
    if question.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "question is empty",
        ));
    }
    let defaults = QueryConfig::default();
    let config = QueryConfig {
        k_shot: req.k_shot.unwrap_or(defaults.k_shot),
        n_samples: req.n_samples.unwrap_or(defaults.n_samples),
        mode: req.mode.unwrap_or(defaults.mode),
        max_retries: req.max_retries.unwrap_or(defaults.max_retries),
        parallelism: req.n_samples.unwrap_or(defaults.parallelism).max(1),
    };
    if config.n_samples == 0 {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "n_samples must be at least 1",
        ));
    }
    let created = now();
    let record = RunRecord {
        run_id: uuid::Uuid::new_v4().simple().to_string(),
        dataset_id: req.dataset_id,
        question,
        config,
        status: RunStatus::Planning,
        decision: None,
        reflection: Vec::new(),
        result: None,
        failure: None,
        timings: None,
        created_at: created.clone(),
        updated_at: created,
    };
    state.persist_run(&record);
    let worker = state.clone();
    let queued = record.clone();
    state.spawn_worker(move || worker.execute_run(queued));
    Ok((StatusCode::ACCEPTED, Json(record)))
}

#[derive(Deserialize)]
struct RunFilter {
    dataset_id: Option<String>,
    status: Option<RunStatus>,
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn list_runs(State(state): State<AppState>, Query(f): Query<RunFilter>) -> Json<serde_json::Value> {
    let matching: Vec<RunRecord> = state
        .inner
        .runs
        .newest_first()
        .into_iter()
        .filter(|r| f.dataset_id.as_ref().is_none_or(|d| &r.dataset_id == d))
        .filter(|r| f.status.is_none_or(|s| r.status == s))
        .collect();
    let offset = f.offset.unwrap_or(0);
    let limit = f.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let total = matching.len();
    let page: Vec<RunRecord> = matching.into_iter().skip(offset).take(limit).collect();
    Json(json!({ "runs": page, "total": total, "offset": offset, "limit": limit }))
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RunRecord>> {
    state
        .inner
        .runs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("run", &id))
}

async fn get_result_csv(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let record = state
        .inner
        .runs
        .get(&id)
        .ok_or_else(|| ApiError::not_found("run", &id))?;
    if record.status != RunStatus::Done {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("run {id} has status {:?}, not done", record.status),
        ));
    }
    let path = state.result_path(&id);
    let internal = |e: String| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e);
    let bytes = tokio::task::spawn_blocking(move || std::fs::read(path))
        .await
        .map_err(|e| internal(e.to_string()))?
        .map_err(|e| internal(e.to_string()))?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"{id}.csv\""),
            ),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchRequest {
    #[serde(default = "default_suite_name")]
    suite: String,
    #[serde(default = "default_k_list")]
    k_list: Vec<usize>,
    #[serde(default)]
    mode: Mode,
    n_samples: Option<usize>,
    parallelism: Option<usize>,
}

fn default_suite_name() -> String {
    "default".into()
}

fn default_k_list() -> Vec<usize> {
    vec![0, 1, 2, 3]
}

async fn submit_bench(
    State(state): State<AppState>,
    Json(req): Json<BenchRequest>,
) -> ApiResult<(StatusCode, Json<BenchRecord>)> {
    if !state.has_suite(&req.suite) {
        return Err(ApiError::not_found("suite", &req.suite));
    }
    if req.k_list.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "k_list is empty"));
    }
    let n_samples = req.n_samples.unwrap_or(PlannerConfig::default().n_samples);
    if n_samples == 0 {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "n_samples must be at least 1",
        ));
    }
    let mut config = SuiteConfig {
        k_shots: req.k_list.clone(),
        parallelism: req.parallelism.unwrap_or(1).max(1),
        ..SuiteConfig::default()
    };
    config.planner.n_samples = n_samples;
    config.planner.parallelism = n_samples;
    config.reflection.mode = req.mode;
    let created = now();
    let record = BenchRecord {
        report_id: uuid::Uuid::new_v4().simple().to_string(),
        suite: req.suite,
        k_list: req.k_list,
        mode: req.mode,
        n_samples,
        status: BenchStatus::Running,
        report: None,
        text: None,
        error: None,
        created_at: created.clone(),
        updated_at: created,
    };
    state.persist_bench(&record);
    let worker = state.clone();
    let queued = record.clone();
    state.spawn_worker(move || worker.execute_bench(queued, config));
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn list_reports(State(state): State<AppState>) -> Json<Vec<BenchRecord>> {
    Json(state.inner.benches.newest_first())
}

async fn get_report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<BenchRecord>> {
    state
        .inner
        .benches
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("report", &id))
}
