//! Query planning with chain-of-thought prompting and self-consistency
//! voting over canonical plan forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{render_planner_prompt, select_examples, KbError, KnowledgeBase};
use crate::llm::{Gateway, LlmError};
use crate::plan::{canonicalize, parse_plan, validate_plan, AnalysisPlan, CanonicalForm};

pub const DEFAULT_SAMPLES: usize = 3;
pub const SAMPLING_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub k_shot: usize,
    pub n_samples: usize,
    pub parallelism: usize,
    pub temperature: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            k_shot: 3,
            n_samples: DEFAULT_SAMPLES,
            parallelism: DEFAULT_SAMPLES,
            temperature: SAMPLING_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCandidate {
    pub sample_index: usize,
    pub raw_response: String,
    /// The bound plan when extraction, parsing and validation all succeeded.
    pub plan: Option<AnalysisPlan>,
    pub error: Option<String>,
    pub canonical: Option<CanonicalForm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDecision {
    pub candidates: Vec<PlanCandidate>,
    pub tally: BTreeMap<CanonicalForm, usize>,
    pub chosen: AnalysisPlan,
    pub chosen_canonical: CanonicalForm,
    pub chosen_votes: usize,
    pub n_samples: usize,
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no valid plan among {} candidate(s): {}", .candidates.len(), summarize(.candidates))]
    AllInvalid { candidates: Vec<PlanCandidate> },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("n_samples must be at least 1")]
    NoSamples,
}

fn summarize(candidates: &[PlanCandidate]) -> String {
    candidates
        .iter()
        .map(|c| format!("[{}] {}", c.sample_index, c.error.as_deref().unwrap_or("valid")))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no plan document found in the reply")]
pub struct NoDocument;

/// The plan document inside an LLM reply: the last fenced block, else the
/// largest balanced `{...}` span.
pub fn extract_plan_document(raw: &str) -> Result<String, NoDocument> {
    if let Some(block) = last_fenced_block(raw) {
        return Ok(block);
    }
    largest_brace_span(raw).map(str::to_string).ok_or(NoDocument)
}

fn last_fenced_block(raw: &str) -> Option<String> {
    let mut last = None;
    let mut open: Option<Vec<&str>> = None;
    for line in raw.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut open, fence) {
            (None, true) => open = Some(Vec::new()),
            (Some(body), true) => {
                last = Some(body.join("\n"));
                open = None;
            }
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    last.filter(|b| !b.trim().is_empty())
}

fn largest_brace_span(raw: &str) -> Option<&str> {
    let bytes = raw.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    let mut start = 0;
    while let Some(offset) = raw[start..].find('{') {
        let open = start + offset;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        let mut close = None;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match close {
            Some(end) => {
                if best.is_none_or(|(s, e)| end - open > e - s) {
                    best = Some((open, end));
                }
                start = end + 1;
            }
            None => start = open + 1,
        }
    }
    best.map(|(s, e)| &raw[s..=e])
}

fn candidate(sample_index: usize, raw: String, kb: &KnowledgeBase) -> PlanCandidate {
    let outcome = extract_plan_document(&raw)
        .map_err(|e| e.to_string())
        .and_then(|doc| parse_plan(&doc, &kb.schema).map_err(|e| e.to_string()))
        .and_then(|plan| match validate_plan(&plan, &kb.schema).first() {
            Some(v) => Err(v.to_string()),
            None => Ok(plan),
        });
    match outcome {
        Ok(plan) => PlanCandidate {
            sample_index,
            raw_response: raw,
            canonical: Some(canonicalize(&plan, &kb.schema)),
            plan: Some(plan),
            error: None,
        },
        Err(error) => PlanCandidate {
            sample_index,
            raw_response: raw,
            plan: None,
            error: Some(error),
            canonical: None,
        },
    }
}

/// Plurality vote over valid candidates; ties go to the form whose first
/// vote has the lowest sample index.
pub fn vote(candidates: Vec<PlanCandidate>) -> Result<PlanDecision, PlannerError> {
    let n_samples = candidates.len();
    let mut tally: BTreeMap<CanonicalForm, usize> = BTreeMap::new();
    let mut first_seen: Vec<(&CanonicalForm, usize)> = Vec::new();
    for c in &candidates {
        if let Some(form) = &c.canonical {
            let count = tally.entry(form.clone()).or_insert(0);
            if *count == 0 {
                first_seen.push((form, c.sample_index));
            }
            *count += 1;
        }
    }
    let winner = first_seen
        .iter()
        .min_by_key(|(form, index)| (std::cmp::Reverse(tally[*form]), *index))
        .map(|(form, _)| (*form).clone());
    let Some(winner) = winner else {
        return Err(PlannerError::AllInvalid { candidates });
    };
    let chosen = candidates
        .iter()
        .find(|c| c.canonical.as_ref() == Some(&winner))
        .and_then(|c| c.plan.clone())
        .expect("winning form has a plan");
    Ok(PlanDecision {
        chosen_votes: tally[&winner],
        chosen,
        chosen_canonical: winner,
        tally,
        candidates,
        n_samples,
    })
}

/// Plans `query` with `n_samples` self-consistency samples.
pub fn plan_query(
    query: &str,
    kb: &KnowledgeBase,
    config: &PlannerConfig,
    gateway: &Gateway,
) -> Result<PlanDecision, PlannerError> {
    if config.n_samples == 0 {
        return Err(PlannerError::NoSamples);
    }
    let examples = select_examples(&kb.examples, config.k_shot)?;
    let request = render_planner_prompt(kb, examples, query, &kb.constraints)
        .with_temperature(config.temperature)
        .with_tag("plan");
    let responses = gateway.complete_n(&request, config.n_samples, config.parallelism.max(1))?;
    let candidates = responses
        .into_iter()
        .enumerate()
        .map(|(i, r)| candidate(i, r.text, kb))
        .collect();
    vote(candidates)
}

/// Chain-of-thought planning without self-consistency.
pub fn plan_query_single(
    query: &str,
    kb: &KnowledgeBase,
    k_shot: usize,
    gateway: &Gateway,
) -> Result<PlanDecision, PlannerError> {
    let config = PlannerConfig {
        k_shot,
        n_samples: 1,
        parallelism: 1,
        ..PlannerConfig::default()
    };
    plan_query(query, kb, &config, gateway)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_fence_wins() {
        let raw = "Reasoning.\n```json\n{\"a\": 1}\n```\nthen\n```\n{\"b\": 2}\n```\n";
        assert_eq!(extract_plan_document(raw).unwrap(), "{\"b\": 2}");
    }

    #[test]
    fn single_fence() {
        let raw = "1. Slice.\n2. Count.\n```json\n{\"steps\": []}\n```";
        assert_eq!(extract_plan_document(raw).unwrap(), "{\"steps\": []}");
    }

    #[test]
    fn falls_back_to_largest_braces() {
        let raw = "Use {x} then {\"steps\": [{\"kind\": \"limit\", \"n\": 1}], \"s\": \"}\"} ok";
        assert_eq!(
            extract_plan_document(raw).unwrap(),
            "{\"steps\": [{\"kind\": \"limit\", \"n\": 1}], \"s\": \"}\"}"
        );
    }

    #[test]
    fn prose_only_is_an_error() {
        assert_eq!(extract_plan_document("I cannot help with that."), Err(NoDocument));
    }
}
