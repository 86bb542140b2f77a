use serde::{Deserialize, Serialize};

use crate::actor::{MemoryRecord, Mode};
use crate::bench::BenchReport;
use crate::pipeline::{QueryConfig, Timings};
use crate::plan::{classify_difficulty, AnalysisPlan, CanonicalForm, Difficulty};
use crate::planner::{PlanCandidate, PlanDecision};
use crate::table::{Table, TableDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Planning,
    Executing,
    Done,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Done | RunStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyEntry {
    pub canonical: CanonicalForm,
    pub votes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub sample_index: usize,
    pub valid: bool,
    pub error: Option<String>,
}

impl From<&PlanCandidate> for CandidateSummary {
    fn from(c: &PlanCandidate) -> Self {
        CandidateSummary {
            sample_index: c.sample_index,
            valid: c.plan.is_some(),
            error: c.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub plan: AnalysisPlan,
    pub canonical: CanonicalForm,
    pub nl_steps: Vec<String>,
    pub difficulty: Difficulty,
    pub votes: usize,
    pub n_samples: usize,
    pub tally: Vec<TallyEntry>,
    pub candidates: Vec<CandidateSummary>,
}

impl DecisionSummary {
    pub fn new(decision: &PlanDecision, nl_steps: &[String]) -> Self {
        let mut tally: Vec<TallyEntry> = decision
            .tally
            .iter()
            .map(|(canonical, &votes)| TallyEntry {
                canonical: canonical.clone(),
                votes,
            })
            .collect();
        tally.sort_by_key(|t| std::cmp::Reverse(t.votes));
        DecisionSummary {
            plan: decision.chosen.clone(),
            canonical: decision.chosen_canonical.clone(),
            nl_steps: nl_steps.to_vec(),
            difficulty: classify_difficulty(&decision.chosen),
            votes: decision.chosen_votes,
            n_samples: decision.n_samples,
            tally,
            candidates: decision.candidates.iter().map(CandidateSummary::from).collect(),
        }
    }
}

/// A result table capped at the service's row limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub table: TableDocument,
    pub total_rows: usize,
    pub truncated: bool,
}

impl ResultTable {
    pub fn capped(table: &Table, max_rows: usize) -> Self {
        ResultTable {
            table: table.head(max_rows).to_document(),
            total_rows: table.row_count(),
            truncated: table.row_count() > max_rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    /// `planning_failure`, `realization_failure`, `llm_error`,
    /// `dataset_unavailable` or `interrupted`.
    pub reason: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidate_errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub dataset_id: String,
    pub question: String,
    pub config: QueryConfig,
    pub status: RunStatus,
    pub decision: Option<DecisionSummary>,
    pub reflection: Vec<MemoryRecord>,
    pub result: Option<ResultTable>,
    pub failure: Option<RunFailure>,
    pub timings: Option<Timings>,
    pub created_at: String,
    pub updated_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchStatus {
    Running,
    Done,
    /// Stopped by a backend failure; the report covers finished cases.
    Aborted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub report_id: String,
    pub suite: String,
    pub k_list: Vec<usize>,
    pub mode: Mode,
    pub n_samples: usize,
    pub status: BenchStatus,
    pub report: Option<BenchReport>,
    /// The aligned text rendering of `report`.
    pub text: Option<String>,
    pub error: Option<String>,
    pub created_at: String,
    pub updated_at: String,
}

pub(crate) trait Keyed {
    fn key(&self) -> &str;
}

impl Keyed for RunRecord {
    fn key(&self) -> &str {
        &self.run_id
    }
}

impl Keyed for BenchRecord {
    fn key(&self) -> &str {
        &self.report_id
    }
}
