//! Benchmark construction from plan ablations, evaluation by strict match,
//! and k-shot sweep reporting.

pub mod matching;
mod report;
mod suite;

use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor::{self, ActorError, ReflectionConfig};
use crate::exec::oracle_execute;
use crate::kb::KnowledgeBase;
use crate::llm::{Fixture, Gateway};
use crate::plan::{classify_difficulty, plan_to_wire, validate_plan, AnalysisPlan, Difficulty};
use crate::planner::{plan_query, PlannerConfig, PlannerError};
use crate::synth::GeneratorConfig;
use crate::table::Table;

pub use matching::{strict_match, values_agree, MatchDiff, MatchVerdict, FLOAT_TOLERANCE};
pub use report::{format_report, BANDS};
pub use suite::{default_suite, SHIPPED_BAND_SIZES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSeed {
    pub id: String,
    pub plan: AnalysisPlan,
    /// One question per prefix length, shortest prefix first.
    pub queries: Vec<String>,
}

/// A named list of seeds over a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    pub name: String,
    pub dataset: GeneratorConfig,
    pub seeds: Vec<AblationSeed>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    pub id: String,
    pub query_text: String,
    pub difficulty: Difficulty,
    pub ground_truth_plan: AnalysisPlan,
    pub expected: Table,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("seed {seed}: has {queries} queries for {steps} steps")]
    QueryCount {
        seed: String,
        queries: usize,
        steps: usize,
    },
    #[error("seed {seed}, prefix {prefix}: {message}")]
    InvalidPrefix {
        seed: String,
        prefix: usize,
        message: String,
    },
    #[error("band sizes {actual:?} differ from the required {expected:?}")]
    BandSize {
        actual: [usize; 4],
        expected: [usize; 4],
    },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("suite aborted: {reason}")]
    Aborted {
        reason: String,
        report: Box<BenchReport>,
    },
}

/// Expands every seed into one case per plan prefix, materializing the
/// expected table with the oracle.
pub fn generate_cases(seeds: &[AblationSeed], dataset: &Table) -> Result<Vec<BenchmarkCase>, BenchError> {
    let mut cases = Vec::new();
    for seed in seeds {
        if seed.queries.len() != seed.plan.len() || seed.plan.is_empty() {
            return Err(BenchError::QueryCount {
                seed: seed.id.clone(),
                queries: seed.queries.len(),
                steps: seed.plan.len(),
            });
        }
        for (i, query) in seed.queries.iter().enumerate() {
            let plan = seed.plan.prefix(i + 1);
            if let Some(v) = validate_plan(&plan, dataset.schema()).first() {
                return Err(BenchError::InvalidPrefix {
                    seed: seed.id.clone(),
                    prefix: i + 1,
                    message: v.to_string(),
                });
            }
            cases.push(BenchmarkCase {
                id: format!("{}-{}", seed.id, i + 1),
                query_text: query.clone(),
                difficulty: classify_difficulty(&plan),
                expected: oracle_execute(&plan, dataset),
                ground_truth_plan: plan,
            });
        }
    }
    Ok(cases)
}

/// Resolves `default` to the built-in suite; anything else is read as a
/// suite JSON document.
pub fn load_suite(name_or_path: &str) -> Result<BenchSuite, BenchError> {
    if name_or_path == "default" {
        return Ok(default_suite());
    }
    let text = std::fs::read_to_string(name_or_path)
        .map_err(|e| BenchError::Precondition(format!("suite {name_or_path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| BenchError::Precondition(format!("suite {name_or_path}: {e}")))
}

/// Cumulative case counts for bands 1, 1-2, 1-3 and 1-4.
pub fn band_sizes(cases: &[BenchmarkCase]) -> [usize; 4] {
    let mut out = [0; 4];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = cases
            .iter()
            .filter(|c| c.difficulty.level() as usize <= i + 1)
            .count();
    }
    out
}

pub fn check_band_sizes(cases: &[BenchmarkCase], expected: [usize; 4]) -> Result<(), BenchError> {
    let actual = band_sizes(cases);
    if actual == expected {
        Ok(())
    } else {
        Err(BenchError::BandSize { actual, expected })
    }
}

/// A percentage truncated to two decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percentage {
    hundredths: u32,
}

impl Percentage {
    pub fn hundredths(self) -> u32 {
        self.hundredths
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.hundredths) / 100.0
    }
}

impl fmt::Display for Percentage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.hundredths / 100;
        let frac = self.hundredths % 100;
        match frac {
            0 => write!(f, "{whole}%"),
            _ if frac.is_multiple_of(10) => write!(f, "{whole}.{}%", frac / 10),
            _ => write!(f, "{whole}.{frac:02}%"),
        }
    }
}

impl Serialize for Percentage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Percentage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !(0.0..=100.0).contains(&v) {
            return Err(serde::de::Error::custom("percentage outside 0..=100"));
        }
        Ok(Percentage {
            hundredths: (v * 100.0).round() as u32,
        })
    }
}

/// `100 * success / total`, truncated to two decimals.
pub fn success_rate(success: usize, total: usize) -> Result<Percentage, BenchError> {
    if total == 0 || success > total {
        return Err(BenchError::Precondition(format!(
            "success_rate needs 0 <= success <= total and total >= 1, got {success}/{total}"
        )));
    }
    let hundredths = (success as u64 * 10_000) / total as u64;
    Ok(Percentage {
        hundredths: hundredths as u32,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureReason {
    PlanningFailure { message: String },
    RealizationFailure { message: String },
    Mismatch { diff: String },
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::PlanningFailure { message } => write!(f, "planning failure: {message}"),
            FailureReason::RealizationFailure { message } => {
                write!(f, "realization failure: {message}")
            }
            FailureReason::Mismatch { diff } => write!(f, "mismatch: {diff}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub k_shot: usize,
    pub case_id: String,
    pub query: String,
    pub difficulty: Difficulty,
    pub success: bool,
    pub failure: Option<FailureReason>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub k_shot: usize,
    /// Highest level included; the band covers levels 1 through this.
    pub max_level: u8,
    pub band: String,
    pub total: usize,
    pub success: usize,
    pub failed: usize,
    pub rate: Percentage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub suite: String,
    pub rows: Vec<ReportRow>,
    pub outcomes: Vec<CaseOutcome>,
    pub incomplete: bool,
}

impl BenchReport {
    /// Builds band rows from outcomes; order of `outcomes` does not matter.
    pub fn from_outcomes(suite: &str, mut outcomes: Vec<CaseOutcome>, incomplete: bool) -> Self {
        outcomes.sort_by(|a, b| (a.k_shot, &a.case_id).cmp(&(b.k_shot, &b.case_id)));
        let mut ks: Vec<usize> = outcomes.iter().map(|o| o.k_shot).collect();
        ks.dedup();
        let mut rows = Vec::new();
        for k in ks {
            for (i, band) in BANDS.iter().enumerate() {
                let max_level = i as u8 + 1;
                let in_band: Vec<&CaseOutcome> = outcomes
                    .iter()
                    .filter(|o| o.k_shot == k && o.difficulty.level() <= max_level)
                    .collect();
                if in_band.is_empty() {
                    continue;
                }
                let success = in_band.iter().filter(|o| o.success).count();
                rows.push(ReportRow {
                    k_shot: k,
                    max_level,
                    band: band.to_string(),
                    total: in_band.len(),
                    success,
                    failed: in_band.len() - success,
                    rate: success_rate(success, in_band.len()).expect("non-empty band"),
                });
            }
        }
        BenchReport {
            suite: suite.to_string(),
            rows,
            outcomes,
            incomplete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub k_shots: Vec<usize>,
    pub planner: PlannerConfig,
    pub reflection: ReflectionConfig,
    /// Cases evaluated concurrently.
    pub parallelism: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            k_shots: vec![0, 1, 2, 3],
            planner: PlannerConfig::default(),
            reflection: ReflectionConfig::default(),
            parallelism: 1,
        }
    }
}

/// Plans, runs and strict-matches every case for every k.
///
/// Gateway failures stop the sweep and return the outcomes gathered so far,
/// flagged incomplete, inside [`BenchError::Aborted`].
pub fn run_suite(
    suite_name: &str,
    cases: &[BenchmarkCase],
    dataset: &Table,
    kb: &KnowledgeBase,
    config: &SuiteConfig,
    gateway: &Gateway,
) -> Result<BenchReport, BenchError> {
    if cases.is_empty() {
        return Err(BenchError::Precondition("no cases to run".into()));
    }
    if config.k_shots.is_empty() {
        return Err(BenchError::Precondition("k_shots is empty".into()));
    }
    if let Some(k) = config.k_shots.iter().find(|&&k| k > kb.examples.len()) {
        return Err(BenchError::Precondition(format!(
            "k={k} exceeds the {} stored examples",
            kb.examples.len()
        )));
    }
    let jobs: Vec<(usize, &BenchmarkCase)> = config
        .k_shots
        .iter()
        .flat_map(|&k| cases.iter().map(move |c| (k, c)))
        .collect();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let abort_reason: Mutex<Option<String>> = Mutex::new(None);
    let outcomes: Mutex<Vec<CaseOutcome>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let width = config.parallelism.clamp(1, jobs.len());
    thread::scope(|scope| {
        for _ in 0..width {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(k, case)) = jobs.get(i) else { break };
                match evaluate_case(k, case, dataset, kb, config, gateway) {
                    Ok(outcome) => outcomes.lock().expect("outcome lock").push(outcome),
                    Err(reason) => {
                        abort.store(true, Ordering::SeqCst);
                        abort_reason
                            .lock()
                            .expect("abort lock")
                            .get_or_insert(format!("case {} (k={k}): {reason}", case.id));
                    }
                }
            });
        }
    });
    let outcomes = outcomes.into_inner().expect("outcome lock");
    match abort_reason.into_inner().expect("abort lock") {
        None => Ok(BenchReport::from_outcomes(suite_name, outcomes, false)),
        Some(reason) => Err(BenchError::Aborted {
            reason,
            report: Box::new(BenchReport::from_outcomes(suite_name, outcomes, true)),
        }),
    }
}

/// `Err` only for infrastructure failures that abort the sweep.
fn evaluate_case(
    k: usize,
    case: &BenchmarkCase,
    dataset: &Table,
    kb: &KnowledgeBase,
    config: &SuiteConfig,
    gateway: &Gateway,
) -> Result<CaseOutcome, String> {
    let start = Instant::now();
    let planner = PlannerConfig {
        k_shot: k,
        ..config.planner
    };
    let failure = match plan_query(&case.query_text, kb, &planner, gateway) {
        Err(PlannerError::AllInvalid { candidates }) => Some(FailureReason::PlanningFailure {
            message: PlannerError::AllInvalid { candidates }.to_string(),
        }),
        Err(e) => return Err(e.to_string()),
        Ok(decision) => match actor::run(
            &decision.chosen,
            &case.query_text,
            None,
            dataset,
            kb,
            Some(gateway),
            &config.reflection,
        ) {
            Err(ActorError::Llm { source, .. }) => return Err(source.to_string()),
            Err(e) => Some(FailureReason::RealizationFailure {
                message: e.to_string(),
            }),
            Ok(result) => {
                let ordered = case.ground_truth_plan.ends_in_sort_order();
                let verdict = strict_match(&result.final_table, &case.expected, ordered);
                verdict
                    .diff
                    .map(|d| FailureReason::Mismatch { diff: d.to_string() })
            }
        },
    };
    Ok(CaseOutcome {
        k_shot: k,
        case_id: case.id.clone(),
        query: case.query_text.clone(),
        difficulty: case.difficulty,
        success: failure.is_none(),
        failure,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}

/// Scripted planner replies that answer every case with its ground-truth
/// plan, `n_samples` times per k.
pub fn oracle_fixtures(cases: &[BenchmarkCase], k_shots: &[usize], n_samples: usize) -> Vec<Fixture> {
    let mut out = Vec::new();
    for _ in k_shots {
        for case in cases {
            for _ in 0..n_samples {
                out.push(Fixture {
                    match_regex: Some(format!("^{}$", regex::escape(&case.query_text))),
                    response: Some(format!(
                        "Reasoning follows the ground truth.\n```json\n{}\n```",
                        plan_to_wire(&case.ground_truth_plan)
                    )),
                    ..Fixture::default()
                });
            }
        }
    }
    out
}
