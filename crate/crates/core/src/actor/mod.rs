//! Plan realization and execution.
//!
//! In safe mode the planner's structured plan runs as is. In natural-language
//! mode each rendered step goes through an LLM translation into a step
//! document, checked against the running schema and repaired from recorded
//! errors until it validates or the retry budget is spent.

pub mod plugin;

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{execute_plan, execute_step, ExecutionTrace, StepTrace};
use crate::kb::{render_actor_prompt, KnowledgeBase};
use crate::llm::{Gateway, LlmError};
use crate::plan::{parse_step, render_steps, AnalysisPlan, PlanChecker, Step};
use crate::planner::extract_plan_document;
use crate::table::{canonical_table_text, Table};

pub use plugin::{
    parse_synthetic_source, CsvLoader, DataLoader, LoadedDataset, PluginError, PluginRegistry,
    SyntheticLoader,
};

/// Rows of a step result kept in memory.
pub const EXCERPT_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Safe,
    NaturalLanguage,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Safe => "safe",
            Mode::NaturalLanguage => "natural_language",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReflectionConfig {
    pub max_retries: u32,
    pub mode: Mode,
}

impl Default for ReflectionConfig {
    fn default() -> Self {
        ReflectionConfig {
            max_retries: 3,
            mode: Mode::Safe,
        }
    }
}

/// One realization attempt. Exactly one of `error` and `execution_excerpt`
/// is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub step_index: usize,
    pub attempt_index: u32,
    pub emitted_document: String,
    pub error: Option<String>,
    pub execution_excerpt: Option<String>,
    pub task_context: String,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_table: Table,
    pub plan_executed: AnalysisPlan,
    pub reflection_attempts_total: u32,
    pub memory: Vec<MemoryRecord>,
    pub trace: ExecutionTrace,
}

#[derive(Debug, Error)]
pub enum ActorError {
    #[error("step {step_index} could not be realized: {}", last_error(.memory))]
    Realization {
        step_index: usize,
        nl_step: String,
        memory: Vec<MemoryRecord>,
    },
    #[error("natural-language mode needs step texts")]
    MissingSteps,
    #[error("natural-language mode needs a gateway")]
    MissingGateway,
    #[error("language model call failed during step {step_index}: {source}")]
    Llm {
        step_index: usize,
        memory: Vec<MemoryRecord>,
        #[source]
        source: LlmError,
    },
}

impl ActorError {
    /// Memory accumulated before the failure.
    pub fn memory(&self) -> &[MemoryRecord] {
        match self {
            ActorError::Realization { memory, .. } | ActorError::Llm { memory, .. } => memory,
            _ => &[],
        }
    }
}

fn last_error(memory: &[MemoryRecord]) -> String {
    memory
        .iter()
        .rev()
        .find_map(|m| m.error.clone())
        .unwrap_or_default()
}

/// Prior attempts for one step, as shown to the coder model.
fn memory_context(records: &[MemoryRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "Attempt {} emitted:\n{}\nError: {}",
            r.attempt_index + 1,
            r.emitted_document,
            r.error.as_deref().unwrap_or("none")
        );
    }
    out
}

fn excerpt(table: &Table) -> String {
    canonical_table_text(&table.head(EXCERPT_ROWS))
}

/// Translates one step description into a validated step and runs it on
/// `table`. Every attempt is appended to `memory`.
#[allow(clippy::too_many_arguments)]
pub fn realize_step(
    step_index: usize,
    nl_step: &str,
    kb: &KnowledgeBase,
    table: &Table,
    task_context: &str,
    memory: &mut Vec<MemoryRecord>,
    gateway: &Gateway,
    config: &ReflectionConfig,
) -> Result<(Step, Table), ActorError> {
    let mut failed: Vec<MemoryRecord> = Vec::new();
    for attempt in 0..=config.max_retries {
        let request = render_actor_prompt(kb, table.schema(), nl_step, &memory_context(&failed))
            .with_temperature(0.0)
            .with_tag(format!("step{step_index}"));
        let reply = match gateway.complete(&request) {
            Ok(r) => r.text,
            Err(source) => {
                return Err(ActorError::Llm {
                    step_index,
                    memory: memory.clone(),
                    source,
                })
            }
        };
        let document = extract_plan_document(&reply).unwrap_or_else(|_| reply.trim().to_string());
        let outcome = parse_step(&document).map_err(|e| e.to_string()).and_then(|step| {
            PlanChecker::new(table.schema())
                .push_normalized(&step)
                .map_err(|v| v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
        });
        match outcome {
            Ok(step) => {
                let output = execute_step(&step, table);
                memory.push(MemoryRecord {
                    step_index,
                    attempt_index: attempt,
                    emitted_document: document,
                    error: None,
                    execution_excerpt: Some(excerpt(&output)),
                    task_context: task_context.to_string(),
                });
                return Ok((step, output));
            }
            Err(error) => {
                let record = MemoryRecord {
                    step_index,
                    attempt_index: attempt,
                    emitted_document: document,
                    error: Some(error),
                    execution_excerpt: None,
                    task_context: task_context.to_string(),
                };
                failed.push(record.clone());
                memory.push(record);
            }
        }
    }
    Err(ActorError::Realization {
        step_index,
        nl_step: nl_step.to_string(),
        memory: memory.clone(),
    })
}

/// Executes a chosen plan. Natural-language mode realizes `nl_steps` (by
/// default the plan's own step renderings) one at a time.
pub fn run(
    plan: &AnalysisPlan,
    query: &str,
    nl_steps: Option<&[String]>,
    table: &Table,
    kb: &KnowledgeBase,
    gateway: Option<&Gateway>,
    config: &ReflectionConfig,
) -> Result<RunResult, ActorError> {
    match config.mode {
        Mode::Safe => {
            let (final_table, trace) = execute_plan(plan, table);
            Ok(RunResult {
                final_table,
                plan_executed: plan.clone(),
                reflection_attempts_total: 0,
                memory: Vec::new(),
                trace,
            })
        }
        Mode::NaturalLanguage => {
            let gateway = gateway.ok_or(ActorError::MissingGateway)?;
            let rendered;
            let steps = match nl_steps {
                Some(s) => s,
                None => {
                    rendered = render_steps(plan);
                    &rendered
                }
            };
            if steps.is_empty() {
                return Err(ActorError::MissingSteps);
            }
            let start = Instant::now();
            let mut memory = Vec::new();
            let mut realized = Vec::with_capacity(steps.len());
            let mut trace = ExecutionTrace::default();
            let mut current = table.clone();
            for (i, nl) in steps.iter().enumerate() {
                let mut context = format!("Question: {query}\n");
                for (j, done) in steps[..i].iter().enumerate() {
                    let _ = writeln!(context, "Step {} (done): {done}", j + 1);
                }
                let t0 = Instant::now();
                let (step, output) =
                    realize_step(i, nl, kb, &current, &context, &mut memory, gateway, config)?;
                trace.steps.push(StepTrace {
                    kind: step.kind().to_string(),
                    input_rows: current.row_count(),
                    output_rows: output.row_count(),
                    elapsed_us: t0.elapsed().as_micros() as u64,
                });
                realized.push(step);
                current = output;
            }
            trace.total_us = start.elapsed().as_micros() as u64;
            let reflections = memory.iter().filter(|m| m.error.is_some()).count() as u32;
            Ok(RunResult {
                final_table: current,
                plan_executed: AnalysisPlan::new(realized),
                reflection_attempts_total: reflections,
                memory,
                trace,
            })
        }
    }
}
