//! HTTP service: dataset registry, asynchronous query runs, bench sweeps.
//!
//! Runs and sweeps execute on blocking worker threads behind a semaphore of
//! `workers` permits. Every status change appends a full record snapshot to
//! an NDJSON log under the data directory, which is replayed on startup.

pub mod records;
mod routes;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

use crate::actor::{LoadedDataset, PluginRegistry, SyntheticLoader};
use crate::bench::{self, BenchError, BenchmarkCase, SuiteConfig};
use crate::config::{Config, ServiceConfig};
use crate::kb::{load_kb, KnowledgeBase};
use crate::llm::{Gateway, LlmError};
use crate::pipeline::{answer_query, QueryError};
use crate::planner::PlannerError;
use crate::synth::{self, GeneratorConfig};
use crate::table::write_csv;

pub use records::{
    BenchRecord, BenchStatus, CandidateSummary, DecisionSummary, ResultTable, RunFailure, RunRecord,
    RunStatus, TallyEntry,
};
pub use routes::router;
pub use store::{content_id, DatasetMeta, DatasetOrigin};

use store::{DatasetStore, RecordLog};

/// KB name always available, describing the default synthetic dataset.
pub const SYNTHETIC_KB: &str = "synthetic";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("data directory {path}: {source}")]
    DataDir { path: String, source: io::Error },
    #[error("knowledge base {name:?}: {message}")]
    Kb { name: String, message: String },
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("server error: {0}")]
    Serve(io::Error),
}

struct Inner {
    config: ServiceConfig,
    gateway: Arc<Gateway>,
    kbs: BTreeMap<String, KnowledgeBase>,
    suites: BTreeMap<String, PathBuf>,
    loaders: PluginRegistry,
    datasets: DatasetStore,
    runs: RecordLog<RunRecord>,
    benches: RecordLog<BenchRecord>,
    suite_cache: Mutex<HashMap<String, Arc<PreparedSuite>>>,
    workers: Arc<Semaphore>,
}

struct PreparedSuite {
    name: String,
    data: synth::SyntheticDataset,
    cases: Vec<BenchmarkCase>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl AppState {
    /// Opens the data directory (creating it), loads configured KBs and
    /// replays the run and bench logs.
    pub fn open(config: &Config, gateway: Arc<Gateway>) -> Result<AppState, ServiceError> {
        let dir = &config.service.data_dir;
        let data_err = |source| ServiceError::DataDir {
            path: dir.display().to_string(),
            source,
        };
        fs::create_dir_all(dir.join("results")).map_err(data_err)?;
        let mut kbs = BTreeMap::new();
        kbs.insert(
            SYNTHETIC_KB.to_string(),
            synth::knowledge_base(&GeneratorConfig::default()),
        );
        for (name, path) in &config.knowledge_bases {
            let kb = load_kb(path).map_err(|e| ServiceError::Kb {
                name: name.clone(),
                message: e.to_string(),
            })?;
            kbs.insert(name.clone(), kb);
        }
        let mut loaders = PluginRegistry::new();
        loaders
            .register("synthetic", Arc::new(SyntheticLoader))
            .expect("fresh registry");
        let state = AppState {
            inner: Arc::new(Inner {
                config: config.service.clone(),
                gateway,
                kbs,
                suites: config.suites.clone(),
                loaders,
                datasets: DatasetStore::open(&dir.join("datasets")).map_err(data_err)?,
                runs: RecordLog::open(&dir.join("runs.ndjson")).map_err(data_err)?,
                benches: RecordLog::open(&dir.join("bench.ndjson")).map_err(data_err)?,
                suite_cache: Mutex::new(HashMap::new()),
                workers: Arc::new(Semaphore::new(config.service.workers.max(1))),
            }),
        };
        state.mark_interrupted();
        Ok(state)
    }

    pub fn from_config(config: &Config) -> Result<AppState, ServiceError> {
        let gateway = Gateway::from_config(&config.backend)?;
        AppState::open(config, Arc::new(gateway))
    }

    /// Runs left unfinished by a previous process can never complete.
    fn mark_interrupted(&self) {
        for mut r in self.inner.runs.newest_first() {
            if !r.status.is_terminal() {
                r.status = RunStatus::Failed;
                r.failure = Some(RunFailure {
                    reason: "interrupted".into(),
                    message: "the service stopped before the run finished".into(),
                    candidate_errors: Vec::new(),
                });
                r.updated_at = now();
                self.persist_run(&r);
            }
        }
        for mut b in self.inner.benches.newest_first() {
            if b.status == BenchStatus::Running {
                b.status = BenchStatus::Failed;
                b.error = Some("the service stopped before the sweep finished".into());
                b.updated_at = now();
                self.persist_bench(&b);
            }
        }
    }

    fn persist_run(&self, record: &RunRecord) {
        if let Err(e) = self.inner.runs.put(record) {
            tracing::error!(run_id = %record.run_id, "cannot append run record: {e}");
        }
    }

    fn persist_bench(&self, record: &BenchRecord) {
        if let Err(e) = self.inner.benches.put(record) {
            tracing::error!(report_id = %record.report_id, "cannot append bench record: {e}");
        }
    }

    fn result_path(&self, run_id: &str) -> PathBuf {
        self.inner
            .config
            .data_dir
            .join("results")
            .join(format!("{run_id}.csv"))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    fn load_dataset(&self, id: &str) -> Result<Arc<LoadedDataset>, String> {
        self.inner.datasets.load(id, &self.inner.kbs, &self.inner.loaders)
    }

    fn has_suite(&self, name: &str) -> bool {
        name == "default" || self.inner.suites.contains_key(name)
    }

    /// Queues `f` on a worker thread once a permit is free.
    fn spawn_worker<F: FnOnce() + Send + 'static>(&self, f: F) {
        let permits = self.inner.workers.clone();
        tokio::spawn(async move {
            let Ok(permit) = permits.acquire_owned().await else {
                return;
            };
            let _ = tokio::task::spawn_blocking(move || {
                let _permit = permit;
                f()
            })
            .await;
        });
    }

    /// Waits up to `timeout` for queued and running work, then syncs logs.
    pub async fn drain(&self, timeout: Duration) {
        let n = self.inner.config.workers.max(1) as u32;
        let _ = tokio::time::timeout(timeout, self.inner.workers.acquire_many(n)).await;
        let _ = self.inner.runs.sync();
        let _ = self.inner.benches.sync();
    }

    fn execute_run(&self, mut record: RunRecord) {
        let dataset = match self.load_dataset(&record.dataset_id) {
            Ok(d) => d,
            Err(message) => {
                record.status = RunStatus::Failed;
                record.failure = Some(RunFailure {
                    reason: "dataset_unavailable".into(),
                    message,
                    candidate_errors: Vec::new(),
                });
                record.updated_at = now();
                self.persist_run(&record);
                return;
            }
        };
        let question = record.question.clone();
        let config = record.config;
        let outcome = answer_query(
            &question,
            &dataset.table,
            &dataset.kb,
            &self.inner.gateway,
            &config,
            &mut |decision, nl_steps| {
                record.status = RunStatus::Executing;
                record.decision = Some(DecisionSummary::new(decision, nl_steps));
                record.updated_at = now();
                self.persist_run(&record);
            },
        );
        match outcome {
            Ok(done) => {
                let path = self.result_path(&record.run_id);
                let written = fs::File::create(&path).map_err(|e| e.to_string()).and_then(|f| {
                    write_csv(&done.run.final_table, io::BufWriter::new(f)).map_err(|e| e.to_string())
                });
                if let Err(e) = written {
                    tracing::error!(run_id = %record.run_id, "cannot write result CSV: {e}");
                }
                record.status = RunStatus::Done;
                record.result = Some(ResultTable::capped(
                    &done.run.final_table,
                    self.inner.config.max_result_rows,
                ));
                record.reflection = done.run.memory;
                record.timings = Some(done.timings);
            }
            Err(e) => {
                record.status = RunStatus::Failed;
                record.timings = Some(e.timings());
                record.reflection = e.memory().to_vec();
                record.failure = Some(failure_of(&e));
            }
        }
        record.updated_at = now();
        self.persist_run(&record);
    }

    fn prepare_suite(&self, name: &str) -> Result<Arc<PreparedSuite>, String> {
        if let Some(p) = self.inner.suite_cache.lock().expect("suite lock").get(name) {
            return Ok(p.clone());
        }
        let suite = match self.inner.suites.get(name) {
            Some(path) => bench::load_suite(&path.to_string_lossy()),
            None => bench::load_suite(name),
        }
        .map_err(|e| e.to_string())?;
        let data = synth::generate(suite.dataset).map_err(|e| e.to_string())?;
        let cases = bench::generate_cases(&suite.seeds, &data.table).map_err(|e| e.to_string())?;
        if name == "default" {
            bench::check_band_sizes(&cases, bench::SHIPPED_BAND_SIZES).map_err(|e| e.to_string())?;
        }
        let prepared = Arc::new(PreparedSuite {
            name: suite.name,
            data,
            cases,
        });
        self.inner
            .suite_cache
            .lock()
            .expect("suite lock")
            .insert(name.to_string(), prepared.clone());
        Ok(prepared)
    }

    fn execute_bench(&self, mut record: BenchRecord, config: SuiteConfig) {
        let result = self.prepare_suite(&record.suite).and_then(|suite| {
            bench::run_suite(
                &suite.name,
                &suite.cases,
                &suite.data.table,
                &suite.data.kb,
                &config,
                &self.inner.gateway,
            )
            .or_else(|e| match e {
                BenchError::Aborted { reason, report } => {
                    record.error = Some(reason);
                    Ok(*report)
                }
                other => Err(other.to_string()),
            })
        });
        match result {
            Ok(report) => {
                record.status = if report.incomplete {
                    BenchStatus::Aborted
                } else {
                    BenchStatus::Done
                };
                record.text = Some(bench::format_report(&report).0);
                record.report = Some(report);
            }
            Err(message) => {
                record.status = BenchStatus::Failed;
                record.error = Some(message);
            }
        }
        record.updated_at = now();
        self.persist_bench(&record);
    }
}

fn failure_of(e: &QueryError) -> RunFailure {
    match e {
        QueryError::Planning {
            source: PlannerError::AllInvalid { candidates },
            ..
        } => RunFailure {
            reason: "planning_failure".into(),
            message: e.to_string(),
            candidate_errors: candidates
                .iter()
                .map(|c| c.error.clone().unwrap_or_default())
                .collect(),
        },
        QueryError::Planning {
            source: PlannerError::Llm(_),
            ..
        }
        | QueryError::Realization {
            source: crate::actor::ActorError::Llm { .. },
            ..
        } => RunFailure {
            reason: "llm_error".into(),
            message: e.to_string(),
            candidate_errors: Vec::new(),
        },
        QueryError::Planning { .. } => RunFailure {
            reason: "planning_failure".into(),
            message: e.to_string(),
            candidate_errors: Vec::new(),
        },
        QueryError::Realization { .. } => RunFailure {
            reason: "realization_failure".into(),
            message: e.to_string(),
            candidate_errors: Vec::new(),
        },
    }
}

/// Binds the configured address. Fails when the port is taken.
pub async fn bind(config: &ServiceConfig) -> Result<TcpListener, ServiceError> {
    let addr = format!("{}:{}", config.bind, config.port);
    TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })
}

/// Serves until `shutdown` resolves, then drains running work.
pub async fn serve_until(
    listener: TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(?addr, "serving");
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Serve)?;
    state.drain(Duration::from_secs(30)).await;
    tracing::info!("stopped");
    Ok(())
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
