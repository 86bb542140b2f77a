#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tabplan::llm::{Fixture, Gateway, ScriptedBackend};
use tabplan::plan::{
    plan_to_wire, AggFunc, AnalysisPlan, Comparator, Condition, Operand, PlanChecker, Predicate, Selection,
    SortKey, Step,
};
use tabplan::table::{ColumnType, FieldSpec, Schema, Table, Timestamp, Value};

pub const WORDS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "alpha beta", "Gamma"];
pub const STATES: [&str; 4] = ["passed", "failed", "N/A", "blocked"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_cell(rng: &mut ChaCha8Rng, field: &FieldSpec) -> Value {
    if rng.gen_bool(0.12) {
        return Value::Null;
    }
    match field.ty {
        ColumnType::Boolean => Value::Boolean(rng.gen()),
        ColumnType::Integer => match rng.gen_range(0..10) {
            0 => Value::Integer(rng.gen_range(-1_000_000..1_000_000)),
            _ => Value::Integer(rng.gen_range(-5..10)),
        },
        // sums over a 1/8 grid are exact; positive values cannot cancel
        ColumnType::Float => match rng.gen_range(0..4) {
            0 => Value::Float(rng.gen_range(1.0..100.0)),
            _ => Value::Float(rng.gen_range(-40i32..40) as f64 / 8.0),
        },
        ColumnType::Text => match &field.states {
            Some(states) => Value::from(states.choose(rng).unwrap().as_str()),
            None => Value::from(*WORDS.choose(rng).unwrap()),
        },
        ColumnType::Timestamp => Value::Timestamp(Timestamp(1_700_000_000 + rng.gen_range(0..6) * 3600)),
    }
}

/// A table of up to `max_rows` rows and 2..=`max_cols` columns with small
/// value domains, so filters and groups hit.
pub fn random_table(rng: &mut ChaCha8Rng, max_rows: usize, max_cols: usize) -> Table {
    let n_cols = rng.gen_range(2..=max_cols);
    let types = [
        ColumnType::Boolean,
        ColumnType::Integer,
        ColumnType::Float,
        ColumnType::Text,
        ColumnType::Timestamp,
    ];
    let fields: Vec<FieldSpec> = (0..n_cols)
        .map(|i| {
            let ty = *types.choose(rng).unwrap();
            let f = FieldSpec::new(format!("c{i}"), ty);
            if ty == ColumnType::Text && rng.gen_bool(0.4) {
                f.with_states(STATES)
            } else {
                f
            }
        })
        .collect();
    let schema = Schema::new(fields).unwrap();
    let n_rows = rng.gen_range(0..=max_rows);
    let rows: Vec<Vec<Value>> = (0..n_rows)
        .map(|_| schema.fields().iter().map(|f| random_cell(rng, f)).collect())
        .collect();
    Table::from_rows(schema, rows).unwrap()
}

/// A fixed non-null value of the field's type.
pub fn random_cell_nonnull(field: &FieldSpec) -> Value {
    match field.ty {
        ColumnType::Boolean => Value::Boolean(true),
        ColumnType::Integer => Value::Integer(7),
        ColumnType::Float => Value::Float(0.5),
        ColumnType::Text => match &field.states {
            Some(states) => Value::from(states[0].as_str()),
            None => Value::from("alpha"),
        },
        ColumnType::Timestamp => Value::Timestamp(Timestamp(1_700_000_000)),
    }
}

fn literal(rng: &mut ChaCha8Rng, field: &FieldSpec) -> Value {
    loop {
        let v = random_cell(rng, field);
        if !v.is_null() {
            return v;
        }
    }
}

fn random_condition(rng: &mut ChaCha8Rng, schema: &Schema) -> Condition {
    let field = schema.fields().choose(rng).unwrap().clone();
    let op = *Comparator::ALL.choose(rng).unwrap();
    let operand = match op {
        Comparator::IsNull | Comparator::NotNull => Operand::None,
        Comparator::In | Comparator::NotIn => {
            let n = rng.gen_range(1..4);
            Operand::List((0..n).map(|_| literal(rng, &field)).collect())
        }
        Comparator::Contains => Operand::Scalar(Value::from(*["a", "ph", "Gam", "e"].choose(rng).unwrap())),
        _ => Operand::Scalar(literal(rng, &field)),
    };
    Condition::new(field.name.clone(), op, operand)
}

fn random_predicate(rng: &mut ChaCha8Rng, schema: &Schema, depth: usize) -> Predicate {
    if depth <= 1 || rng.gen_bool(0.5) {
        return random_condition(rng, schema).into();
    }
    let n = rng.gen_range(1..4);
    let children = (0..n).map(|_| random_predicate(rng, schema, depth - 1)).collect();
    if rng.gen() {
        Predicate::And(children)
    } else {
        Predicate::Or(children)
    }
}

fn some_columns(rng: &mut ChaCha8Rng, schema: &Schema, max: usize) -> Vec<String> {
    let mut names: Vec<String> = schema.names().map(String::from).collect();
    names.shuffle(rng);
    let n = rng.gen_range(1..=max.min(names.len()));
    names.truncate(n);
    names
}

/// One candidate step over `schema`; it may not validate.
pub fn random_step(rng: &mut ChaCha8Rng, schema: &Schema) -> Step {
    match rng.gen_range(0..6) {
        0 | 1 => {
            let select = if rng.gen_bool(0.5) {
                Selection::All
            } else {
                Selection::Columns(some_columns(rng, schema, 4))
            };
            let filter = rng.gen_bool(0.8).then(|| random_predicate(rng, schema, 3));
            Step::slice(select, filter)
        }
        2 => {
            let func = *AggFunc::ALL.choose(rng).unwrap();
            let column = if func == AggFunc::Count && rng.gen_bool(0.5) {
                None
            } else {
                Some(schema.fields().choose(rng).unwrap().name.clone())
            };
            let group_by = if rng.gen_bool(0.3) {
                Vec::new()
            } else {
                some_columns(rng, schema, 2)
                    .into_iter()
                    .filter(|g| Some(g) != column.as_ref())
                    .collect()
            };
            Step::aggregate(func, column.as_deref(), group_by)
        }
        3 => Step::sort(
            some_columns(rng, schema, 3)
                .into_iter()
                .map(|c| {
                    if rng.gen() {
                        SortKey::asc(c)
                    } else {
                        SortKey::desc(c)
                    }
                })
                .collect(),
        ),
        4 => Step::limit(rng.gen_range(1..8)),
        _ => Step::distinct(some_columns(rng, schema, 2)),
    }
}

/// A valid plan of 1..=`max_steps` steps, built by rejection sampling
/// candidate steps through the plan checker.
pub fn random_plan(rng: &mut ChaCha8Rng, schema: &Schema, max_steps: usize) -> AnalysisPlan {
    let target = rng.gen_range(1..=max_steps);
    let mut checker = PlanChecker::new(schema);
    let mut steps = Vec::new();
    let mut attempts = 0;
    while steps.len() < target && attempts < 200 {
        attempts += 1;
        let candidate = random_step(rng, checker.current());
        if let Ok(step) = checker.push_normalized(&candidate) {
            steps.push(step);
        }
    }
    if steps.is_empty() {
        steps.push(Step::limit(1));
    }
    AnalysisPlan::new(steps)
}

/// A planner reply wrapping `plan` in a fenced document.
pub fn plan_reply(plan: &AnalysisPlan) -> String {
    format!(
        "1. Work out the steps.\n2. Emit the plan.\n```json\n{}\n```",
        plan_to_wire(plan)
    )
}

pub fn scripted(fixtures: Vec<Fixture>) -> Gateway {
    Gateway::new(
        std::sync::Arc::new(ScriptedBackend::new(fixtures)),
        tabplan::llm::BackendConfig {
            backoff_ms: 1,
            ..Default::default()
        },
    )
}

#[cfg(feature = "service")]
pub mod server {
    use std::path::Path;
    use std::sync::Arc;
    use std::time::{Duration, Instant};

    use serde_json::Value as Json;
    use tabplan::config::Config;
    use tabplan::llm::{Fixture, Gateway, ScriptedBackend};
    use tabplan::service::{serve_until, AppState};
    use tokio::sync::oneshot;

    pub struct TestServer {
        pub base: String,
        pub client: reqwest::blocking::Client,
        stop: Option<oneshot::Sender<()>>,
        thread: Option<std::thread::JoinHandle<()>>,
    }

    impl TestServer {
        /// Serves `data_dir` with a scripted backend over `fixtures`.
        pub fn start(data_dir: &Path, fixtures: Vec<Fixture>) -> TestServer {
            let mut config = Config::default();
            config.service.data_dir = data_dir.to_path_buf();
            config.service.port = 0;
            let gateway = Arc::new(Gateway::new(
                Arc::new(ScriptedBackend::new(fixtures)),
                tabplan::llm::BackendConfig {
                    backoff_ms: 1,
                    ..Default::default()
                },
            ));
            let state = AppState::open(&config, gateway).expect("open state");
            let (addr_tx, addr_rx) = std::sync::mpsc::channel();
            let (stop, stopped) = oneshot::channel::<()>();
            let thread = std::thread::spawn(move || {
                let rt = tokio::runtime::Builder::new_multi_thread()
                    .worker_threads(2)
                    .enable_all()
                    .build()
                    .unwrap();
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                    addr_tx.send(listener.local_addr().unwrap()).unwrap();
                    serve_until(listener, state, async {
                        let _ = stopped.await;
                    })
                    .await
                    .unwrap();
                });
            });
            let addr = addr_rx.recv().expect("server address");
            TestServer {
                base: format!("http://{addr}"),
                client: reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(120))
                    .build()
                    .unwrap(),
                stop: Some(stop),
                thread: Some(thread),
            }
        }

        pub fn url(&self, path: &str) -> String {
            format!("{}{}", self.base, path)
        }

        pub fn get(&self, path: &str) -> reqwest::blocking::Response {
            self.client.get(self.url(path)).send().unwrap()
        }

        pub fn post_json(&self, path: &str, body: &Json) -> reqwest::blocking::Response {
            self.client.post(self.url(path)).json(body).send().unwrap()
        }

        /// Polls `path` until its `status` field satisfies `done`.
        pub fn wait_for(&self, path: &str, done: impl Fn(&str) -> bool) -> Json {
            let start = Instant::now();
            loop {
                let doc: Json = self.get(path).json().unwrap();
                if done(doc["status"].as_str().unwrap_or_default()) {
                    return doc;
                }
                assert!(
                    start.elapsed() < Duration::from_secs(120),
                    "timed out waiting on {path}: {doc}"
                );
                std::thread::sleep(Duration::from_millis(10));
            }
        }

        pub fn wait_run(&self, run_id: &str) -> Json {
            self.wait_for(&format!("/v1/runs/{run_id}"), |s| s == "done" || s == "failed")
        }

        /// Stops serving and waits for running work to drain.
        pub fn stop(mut self) {
            self.shutdown();
        }

        fn shutdown(&mut self) {
            if let Some(stop) = self.stop.take() {
                let _ = stop.send(());
            }
            if let Some(t) = self.thread.take() {
                let _ = t.join();
            }
        }
    }

    impl Drop for TestServer {
        fn drop(&mut self) {
            self.shutdown();
        }
    }
}
