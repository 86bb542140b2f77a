//! One question end to end: plan, vote, realize, execute.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor::{self, ActorError, MemoryRecord, Mode, ReflectionConfig, RunResult};
use crate::kb::KnowledgeBase;
use crate::llm::Gateway;
use crate::plan::render_steps;
use crate::planner::{plan_query, PlanDecision, PlannerConfig, PlannerError};
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryConfig {
    pub k_shot: usize,
    pub n_samples: usize,
    pub mode: Mode,
    pub max_retries: u32,
    pub parallelism: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        let planner = PlannerConfig::default();
        QueryConfig {
            k_shot: planner.k_shot,
            n_samples: planner.n_samples,
            mode: Mode::Safe,
            max_retries: ReflectionConfig::default().max_retries,
            parallelism: planner.parallelism,
        }
    }
}

impl QueryConfig {
    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            k_shot: self.k_shot,
            n_samples: self.n_samples,
            parallelism: self.parallelism,
            ..PlannerConfig::default()
        }
    }

    pub fn reflection(&self) -> ReflectionConfig {
        ReflectionConfig {
            max_retries: self.max_retries,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub planning_ms: u64,
    pub execution_ms: u64,
    pub total_ms: u64,
}

#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub decision: PlanDecision,
    pub nl_steps: Vec<String>,
    pub run: RunResult,
    pub timings: Timings,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("planning failed: {source}")]
    Planning {
        timings: Timings,
        #[source]
        source: PlannerError,
    },
    #[error("execution failed: {source}")]
    Realization {
        decision: Box<PlanDecision>,
        nl_steps: Vec<String>,
        timings: Timings,
        #[source]
        source: ActorError,
    },
}

impl QueryError {
    pub fn timings(&self) -> Timings {
        match self {
            QueryError::Planning { timings, .. } | QueryError::Realization { timings, .. } => *timings,
        }
    }

    pub fn memory(&self) -> &[MemoryRecord] {
        match self {
            QueryError::Planning { .. } => &[],
            QueryError::Realization { source, .. } => source.memory(),
        }
    }

    /// True when no plan survived validation, as opposed to an LLM or
    /// configuration failure during planning.
    pub fn is_planning_failure(&self) -> bool {
        matches!(
            self,
            QueryError::Planning {
                source: PlannerError::AllInvalid { .. },
                ..
            }
        )
    }
}

fn millis(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Answers `question` over `table`. `on_planned` runs between the two
/// stages, after a plan has been chosen.
pub fn answer_query(
    question: &str,
    table: &Table,
    kb: &KnowledgeBase,
    gateway: &Gateway,
    config: &QueryConfig,
    on_planned: &mut dyn FnMut(&PlanDecision, &[String]),
) -> Result<QueryOutcome, QueryError> {
    let start = Instant::now();
    let decision = plan_query(question, kb, &config.planner(), gateway).map_err(|source| {
        let t = millis(start);
        QueryError::Planning {
            timings: Timings {
                planning_ms: t,
                execution_ms: 0,
                total_ms: t,
            },
            source,
        }
    })?;
    let planning_ms = millis(start);
    let nl_steps = render_steps(&decision.chosen);
    on_planned(&decision, &nl_steps);
    let exec_start = Instant::now();
    let result = actor::run(
        &decision.chosen,
        question,
        Some(&nl_steps),
        table,
        kb,
        Some(gateway),
        &config.reflection(),
    );
    let timings = Timings {
        planning_ms,
        execution_ms: millis(exec_start),
        total_ms: millis(start),
    };
    match result {
        Ok(run) => Ok(QueryOutcome {
            decision,
            nl_steps,
            run,
            timings,
        }),
        Err(source) => Err(QueryError::Realization {
            decision: Box::new(decision),
            nl_steps,
            timings,
            source,
        }),
    }
}
