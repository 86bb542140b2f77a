//! Domain knowledge: field documentation, constraints and worked examples.
//!
//! The KB file is JSON with six sections:
//!
//! ```json
//! {
//!   "schema": {"fields": [{"name": "test_status", "type": "text", "states": ["passed", "failed", "N/A", "blocked"]}]},
//!   "field_notes": [{"field": "test_status", "note": "Outcome of the run.", "states": ["passed", "failed", "N/A", "blocked"]}],
//!   "dataset_prose": "One row per executed test case.",
//!   "terminology": [{"term": "release candidate", "definition": "A build proposed for release."}],
//!   "constraints": ["..."],
//!   "examples": [{"query": "...", "reasoning": ["..."], "plan": {"steps": []}, "difficulty": 1}]
//! }
//! ```

mod prompt;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::plan::{classify_difficulty, parse_plan, plan_to_json, AnalysisPlan, Difficulty};
use crate::table::Schema;

pub use prompt::{render_actor_prompt, render_planner_prompt, ACTION_DEFINITIONS};

/// Warns that status-like fields have more than two outcomes.
pub const NON_BINARY_STATES: &str = "Some fields have more than two states. A status is not just \
'passed' or 'failed': values such as 'N/A' or 'blocked' also occur, so rows that are not \
'failed' are not necessarily 'passed'. Always filter on the exact state the question asks about \
and never assume a value and its opposite cover every row.";

/// Asks for filtering before anything else.
pub const FILTER_FIRST: &str = "Narrow the data first. Put slicing steps that filter rows and \
select columns before sorting, grouping or computing statistics, so later operations run on \
the reduced data.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldNote {
    pub field: String,
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermEntry {
    pub term: String,
    pub definition: String,
}

/// Ordered constraint texts; always contains [`NON_BINARY_STATES`] and
/// [`FILTER_FIRST`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSet(Vec<String>);

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet(vec![NON_BINARY_STATES.to_string(), FILTER_FIRST.to_string()])
    }
}

impl ConstraintSet {
    /// The two built-in constraints followed by `extra`, without duplicates.
    pub fn with_extra<I: IntoIterator<Item = String>>(extra: I) -> Self {
        let mut set = ConstraintSet::default();
        for c in extra {
            if !set.0.contains(&c) {
                set.0.push(c);
            }
        }
        set
    }

    pub fn texts(&self) -> &[String] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotExample {
    pub query: String,
    pub reasoning: Vec<String>,
    pub plan: AnalysisPlan,
    pub difficulty: Difficulty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub schema: Schema,
    pub field_notes: Vec<FieldNote>,
    pub dataset_prose: String,
    pub terminology: Vec<TermEntry>,
    pub constraints: ConstraintSet,
    pub examples: Vec<FewShotExample>,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("malformed knowledge base: {0}")]
    Malformed(String),
    #[error("field {field:?} has no note")]
    MissingNote { field: String },
    #[error("note for {field:?} does not describe a schema field")]
    UnknownField { field: String },
    #[error("note for {field:?} lists states {note:?} but the schema lists {schema:?}")]
    StatesMismatch {
        field: String,
        note: Vec<String>,
        schema: Vec<String>,
    },
    #[error("example {index}: {message}")]
    Example { index: usize, message: String },
    #[error("requested {k} examples but the store has {available}")]
    TooManyExamples { k: usize, available: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawKb {
    schema: Schema,
    field_notes: Vec<FieldNote>,
    dataset_prose: String,
    #[serde(default)]
    terminology: Vec<TermEntry>,
    #[serde(default)]
    constraints: Vec<String>,
    #[serde(default)]
    examples: Vec<RawExample>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawExample {
    query: String,
    reasoning: Vec<String>,
    plan: Json,
    difficulty: Difficulty,
}

impl KnowledgeBase {
    /// Builds and cross-validates a KB.
    pub fn new(
        schema: Schema,
        field_notes: Vec<FieldNote>,
        dataset_prose: impl Into<String>,
        terminology: Vec<TermEntry>,
        constraints: ConstraintSet,
        examples: Vec<FewShotExample>,
    ) -> Result<Self, KbError> {
        let kb = KnowledgeBase {
            schema,
            field_notes,
            dataset_prose: dataset_prose.into(),
            terminology,
            constraints,
            examples,
        };
        kb.check()?;
        Ok(kb)
    }

    fn check(&self) -> Result<(), KbError> {
        for note in &self.field_notes {
            if self.schema.get(&note.field).is_none() {
                return Err(KbError::UnknownField {
                    field: note.field.clone(),
                });
            }
        }
        for field in self.schema.fields() {
            let note = self.note(&field.name).ok_or_else(|| KbError::MissingNote {
                field: field.name.clone(),
            })?;
            if note.states != field.states {
                return Err(KbError::StatesMismatch {
                    field: field.name.clone(),
                    note: note.states.clone().unwrap_or_default(),
                    schema: field.states.clone().unwrap_or_default(),
                });
            }
        }
        for (index, ex) in self.examples.iter().enumerate() {
            let bad = |message: String| KbError::Example { index, message };
            if ex.reasoning.is_empty() {
                return Err(bad("reasoning is empty".into()));
            }
            let violations = crate::plan::validate_plan(&ex.plan, &self.schema);
            if let Some(v) = violations.first() {
                return Err(bad(v.to_string()));
            }
            let actual = classify_difficulty(&ex.plan);
            if actual != ex.difficulty {
                return Err(bad(format!(
                    "declared difficulty {} but the plan is level {actual}",
                    ex.difficulty
                )));
            }
        }
        Ok(())
    }

    pub fn note(&self, field: &str) -> Option<&FieldNote> {
        self.field_notes
            .iter()
            .find(|n| n.field.eq_ignore_ascii_case(field))
    }

    pub fn from_json(text: &str) -> Result<Self, KbError> {
        let raw: RawKb = serde_json::from_str(text).map_err(|e| KbError::Malformed(e.to_string()))?;
        let mut examples = Vec::with_capacity(raw.examples.len());
        for (index, ex) in raw.examples.into_iter().enumerate() {
            let plan = parse_plan(&ex.plan.to_string(), &raw.schema).map_err(|e| KbError::Example {
                index,
                message: e.to_string(),
            })?;
            examples.push(FewShotExample {
                query: ex.query,
                reasoning: ex.reasoning,
                plan,
                difficulty: ex.difficulty,
            });
        }
        KnowledgeBase::new(
            raw.schema,
            raw.field_notes,
            raw.dataset_prose,
            raw.terminology,
            ConstraintSet::with_extra(raw.constraints),
            examples,
        )
    }

    /// Serializes to the KB file format. Built-in constraints are omitted
    /// since loading restores them.
    pub fn to_json(&self) -> String {
        let builtin = ConstraintSet::default();
        let raw = RawKb {
            schema: self.schema.clone(),
            field_notes: self.field_notes.clone(),
            dataset_prose: self.dataset_prose.clone(),
            terminology: self.terminology.clone(),
            constraints: self
                .constraints
                .texts()
                .iter()
                .filter(|c| !builtin.texts().contains(c))
                .cloned()
                .collect(),
            examples: self
                .examples
                .iter()
                .map(|e| RawExample {
                    query: e.query.clone(),
                    reasoning: e.reasoning.clone(),
                    plan: plan_to_json(&e.plan),
                    difficulty: e.difficulty,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("KB serializes")
    }
}

/// Reads and validates a KB file.
pub fn load_kb(path: &Path) -> Result<KnowledgeBase, KbError> {
    KnowledgeBase::from_json(&fs::read_to_string(path)?)
}

/// The first `k` examples in store order.
pub fn select_examples(store: &[FewShotExample], k: usize) -> Result<&[FewShotExample], KbError> {
    store.get(..k).ok_or(KbError::TooManyExamples {
        k,
        available: store.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{Condition, Step};
    use crate::table::{ColumnType, FieldSpec};

    const STATES: [&str; 4] = ["passed", "failed", "N/A", "blocked"];

    fn schema() -> Schema {
        Schema::new(vec![
            FieldSpec::new("release_candidate", ColumnType::Text),
            FieldSpec::new("test_status", ColumnType::Text).with_states(STATES),
        ])
        .unwrap()
    }

    fn notes() -> Vec<FieldNote> {
        vec![
            FieldNote {
                field: "release_candidate".into(),
                note: "Build under evaluation.".into(),
                states: None,
            },
            FieldNote {
                field: "test_status".into(),
                note: "Outcome.".into(),
                states: Some(STATES.iter().map(|s| s.to_string()).collect()),
            },
        ]
    }

    fn kb() -> KnowledgeBase {
        let ex = FewShotExample {
            query: "Which tests failed?".into(),
            reasoning: vec!["Filter on failed.".into()],
            plan: AnalysisPlan::new(vec![Step::filter(Condition::eq("test_status", "failed"))]),
            difficulty: Difficulty::L1,
        };
        KnowledgeBase::new(
            schema(),
            notes(),
            "Test results.",
            vec![],
            ConstraintSet::default(),
            vec![ex.clone(), ex.clone(), ex.clone(), ex],
        )
        .unwrap()
    }

    #[test]
    fn missing_note_names_field() {
        let err = KnowledgeBase::new(
            schema(),
            notes()[..1].to_vec(),
            "",
            vec![],
            ConstraintSet::default(),
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, KbError::MissingNote { ref field } if field == "test_status"));
    }

    #[test]
    fn binary_states_in_note_are_rejected() {
        let mut n = notes();
        n[1].states = Some(vec!["passed".into(), "failed".into()]);
        let err = KnowledgeBase::new(schema(), n, "", vec![], ConstraintSet::default(), vec![]).unwrap_err();
        assert!(matches!(err, KbError::StatesMismatch { .. }));
    }

    #[test]
    fn example_selection() {
        let kb = kb();
        assert!(select_examples(&kb.examples, 0).unwrap().is_empty());
        assert_eq!(select_examples(&kb.examples, 3).unwrap().len(), 3);
        assert!(matches!(
            select_examples(&kb.examples, 99),
            Err(KbError::TooManyExamples { k: 99, available: 4 })
        ));
    }

    #[test]
    fn file_round_trip() {
        let kb = kb();
        let again = KnowledgeBase::from_json(&kb.to_json()).unwrap();
        assert_eq!(again, kb);
    }

    #[test]
    fn constraints_always_include_builtins() {
        let c = ConstraintSet::with_extra(vec!["extra".to_string(), FILTER_FIRST.to_string()]);
        assert_eq!(c.texts().len(), 3);
        assert!(c.texts()[0].contains("N/A"));
    }
}
