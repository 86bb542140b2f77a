use std::fmt::Write as _;

use super::{ConstraintSet, FewShotExample, KnowledgeBase};
use crate::llm::ChatRequest;
use crate::plan::plan_to_wire;
use crate::table::{FieldSpec, Schema};

/// The two actions every plan step must be one of.
pub const ACTION_DEFINITIONS: &str = "\
1. Slicing: specify the columns to select and the conditions for filtering rows from the data \
to be analyzed.
2. Operation: describe an operation (such as max, mean, count, sort or limit) to be performed on \
the values of one or more columns of the data obtained from the slicing steps.";

const PLAN_FORMAT: &str = r#"The plan is a JSON document {"steps": [...]}. Each step is one of:
- {"kind": "slice", "select": "all" | [columns], "where": condition}   ("where" is optional)
- {"kind": "aggregate", "func": "count"|"sum"|"mean"|"min"|"max"|"median"|"distinct_count", "column": column, "group_by": [columns]}
  ("column" is optional only for count; the result column is named <func>_<column>, or "count")
- {"kind": "sort", "keys": [{"col": column, "order": "asc"|"desc"}]}
- {"kind": "limit", "n": number}
- {"kind": "distinct", "columns": [columns]}
A condition is {"col": column, "op": op, "value": literal} with op in eq, ne, lt, le, gt, ge,
in, not_in (value is a list), contains (text), is_null, not_null (no value), or
{"and": [conditions]} / {"or": [conditions]} nested at most four levels deep.
Timestamps are written as "YYYY-MM-DDTHH:MM:SSZ". Each step sees only the columns produced by
the step before it."#;

const STEP_FORMAT: &str = r#"Answer with exactly one JSON step document, one of:
- {"kind": "slice", "select": "all" | [columns], "where": condition}
- {"kind": "aggregate", "func": "count"|"sum"|"mean"|"min"|"max"|"median"|"distinct_count", "column": column, "group_by": [columns]}
- {"kind": "sort", "keys": [{"col": column, "order": "asc"|"desc"}]}
- {"kind": "limit", "n": number}
- {"kind": "distinct", "columns": [columns]}
A condition is {"col": column, "op": op, "value": literal} (op: eq, ne, lt, le, gt, ge, in,
not_in, contains, is_null, not_null) or {"and": [...]} / {"or": [...]}."#;

fn field_line(out: &mut String, field: &FieldSpec, note: &str) {
    let _ = write!(out, "- {} ({})", field.name, field.ty.as_str());
    if !note.is_empty() {
        let _ = write!(out, ": {note}");
    }
    if let Some(states) = &field.states {
        let quoted: Vec<String> = states.iter().map(|s| format!("'{s}'")).collect();
        let _ = write!(out, " States: {}.", quoted.join(", "));
    }
    out.push('\n');
}

fn note_for<'a>(kb: &'a KnowledgeBase, field: &'a FieldSpec) -> &'a str {
    kb.note(&field.name)
        .map_or(field.description.as_str(), |n| n.note.as_str())
}

/// Planner prompt: domain grounding, the two actions, constraints, wire
/// format and `examples` as worked (question, reasoning, plan) triples. The
/// query goes in the user message.
pub fn render_planner_prompt(
    kb: &KnowledgeBase,
    examples: &[FewShotExample],
    query: &str,
    constraints: &ConstraintSet,
) -> ChatRequest {
    let mut s = String::new();
    s.push_str(
        "You are the planner of a data analysis assistant for automotive software release \
decisions. You break a question about a table of test results into a short plan of simple \
steps that another agent executes.\n\n",
    );
    let _ = writeln!(s, "## Dataset\n{}\n", kb.dataset_prose.trim());
    s.push_str("## Fields\n");
    for field in kb.schema.fields() {
        field_line(&mut s, field, note_for(kb, field));
    }
    if !kb.terminology.is_empty() {
        s.push_str("\n## Terminology\n");
        for t in &kb.terminology {
            let _ = writeln!(s, "- {}: {}", t.term, t.definition);
        }
    }
    let _ = writeln!(
        s,
        "\n## Actions\nEvery step is one of two actions:\n{ACTION_DEFINITIONS}\n"
    );
    s.push_str("## Constraints\n");
    for (i, c) in constraints.texts().iter().enumerate() {
        let _ = writeln!(s, "{}. {c}", i + 1);
    }
    let _ = writeln!(s, "\n## Plan format\n{PLAN_FORMAT}\n");
    if !examples.is_empty() {
        s.push_str("## Examples\n");
        for (i, ex) in examples.iter().enumerate() {
            let _ = writeln!(s, "Example {}\nQuestion: {}\nReasoning:", i + 1, ex.query);
            for (j, r) in ex.reasoning.iter().enumerate() {
                let _ = writeln!(s, "{}. {r}", j + 1);
            }
            let _ = writeln!(s, "Plan:\n```json\n{}\n```\n", plan_to_wire(&ex.plan));
        }
    }
    s.push_str(
        "## Answer\nThink step by step. First write your reasoning as numbered steps, each one \
slicing or operation action naming every column and value it uses. Then output exactly one \
fenced ```json block containing the plan document, and nothing after it.\n",
    );
    ChatRequest::new(s, query)
}

/// Actor prompt for translating one plan step. `schema` is the table the
/// step runs on; `memory_context` (prior attempts and errors) is appended
/// when non-empty.
pub fn render_actor_prompt(
    kb: &KnowledgeBase,
    schema: &Schema,
    nl_step: &str,
    memory_context: &str,
) -> ChatRequest {
    let mut s = String::new();
    s.push_str(
        "You are a coder agent. Translate one natural-language analysis step into one \
structured step document that runs on the current table.\n\n## Current table columns\n",
    );
    for field in schema.fields() {
        field_line(&mut s, field, note_for(kb, field));
    }
    let _ = writeln!(s, "\n## Step format\n{STEP_FORMAT}");
    s.push_str("Use column names exactly as listed and the exact state values shown.\n");
    if !memory_context.trim().is_empty() {
        let _ = writeln!(
            s,
            "\n## Previous attempts\n{}\nAnalyze the errors above and emit a corrected step.",
            memory_context.trim_end()
        );
    }
    ChatRequest::new(s, nl_step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{FieldNote, KnowledgeBase};
    use crate::plan::{AnalysisPlan, Condition, Difficulty, Step};
    use crate::table::ColumnType;

    fn kb(n_examples: usize) -> KnowledgeBase {
        let schema = Schema::new(vec![
            FieldSpec::new("release_candidate", ColumnType::Text),
            FieldSpec::new("test_status", ColumnType::Text)
                .with_states(["passed", "failed", "N/A", "blocked"]),
        ])
        .unwrap();
        let notes = schema
            .fields()
            .iter()
            .map(|f| FieldNote {
                field: f.name.clone(),
                note: format!("about {}", f.name),
                states: f.states.clone(),
            })
            .collect();
        let ex = FewShotExample {
            query: "Which tests failed?".into(),
            reasoning: vec!["Keep failed rows.".into()],
            plan: AnalysisPlan::new(vec![Step::filter(Condition::eq("test_status", "failed"))]),
            difficulty: Difficulty::L1,
        };
        KnowledgeBase::new(
            schema,
            notes,
            "Test results.",
            vec![],
            ConstraintSet::default(),
            vec![ex; n_examples],
        )
        .unwrap()
    }

    #[test]
    fn zero_shot_has_actions_and_constraints_only() {
        let kb = kb(3);
        let req = render_planner_prompt(&kb, &[], "q", &kb.constraints);
        assert!(req.system_prompt.contains(ACTION_DEFINITIONS));
        assert!(req.system_prompt.contains("'N/A'"));
        assert!(req.system_prompt.contains("Narrow the data first"));
        assert!(!req.system_prompt.contains("## Examples"));
        assert_eq!(req.last_user_message(), "q");
    }

    #[test]
    fn three_shot_has_three_plan_documents() {
        let kb = kb(3);
        let req = render_planner_prompt(&kb, &kb.examples, "q", &kb.constraints);
        // three examples plus the format instruction mentioning ```json
        assert_eq!(req.system_prompt.matches("```json\n{").count(), 3);
    }

    #[test]
    fn prompts_are_pure() {
        let kb = kb(2);
        let a = render_planner_prompt(&kb, &kb.examples, "q", &kb.constraints);
        let b = render_planner_prompt(&kb, &kb.examples, "q", &kb.constraints);
        assert_eq!(a, b);
    }

    #[test]
    fn actor_memory_section_only_on_retry() {
        let kb = kb(0);
        let first = render_actor_prompt(&kb, &kb.schema, "Keep failed rows.", "");
        assert!(!first.system_prompt.contains("Previous attempts"));
        assert!(first
            .system_prompt
            .contains("'passed', 'failed', 'N/A', 'blocked'"));
        let retry = render_actor_prompt(
            &kb,
            &kb.schema,
            "Keep failed rows.",
            "Attempt 1 emitted {\"kind\":\"slice\"}\nError: unknown column relese_candidate",
        );
        assert!(retry.system_prompt.contains("unknown column relese_candidate"));
        assert!(retry.system_prompt.contains("{\"kind\":\"slice\"}"));
    }
}
