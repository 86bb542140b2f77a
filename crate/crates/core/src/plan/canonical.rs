use std::fmt;

use serde::{Deserialize, Serialize};

use super::check::PlanChecker;
use super::{AnalysisPlan, Operand, OperationStep, Predicate, Selection, Step};
use crate::table::{format_float, Schema, Value};

/// Canonical text of a plan; two plans vote together iff their forms are
/// equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalForm(pub String);

impl CanonicalForm {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Canonical form of `plan` bound to `schema`.
///
/// Normalization: names in schema casing; `select all` expanded to the
/// running column list; `and`/`or` trees flattened, single-child nodes
/// unwrapped, siblings sorted and deduplicated; `in` lists sorted and
/// deduplicated; numbers in shortest round-trip form. Everything else
/// (select order, sort direction, group_by order) is kept because it changes
/// the result.
pub fn canonicalize(plan: &AnalysisPlan, schema: &Schema) -> CanonicalForm {
    let mut checker = PlanChecker::new(schema);
    let mut parts = Vec::with_capacity(plan.steps.len());
    for step in &plan.steps {
        let input = checker.current().clone();
        let step = checker.push_normalized(step).unwrap_or_else(|_| step.clone());
        parts.push(step_text(&step, &input));
    }
    CanonicalForm(parts.join(" | "))
}

fn step_text(step: &Step, input: &Schema) -> String {
    match step {
        Step::Slice(s) => {
            let cols: Vec<String> = match &s.select {
                Selection::All => input.names().map(str::to_string).collect(),
                Selection::Columns(c) => c.clone(),
            };
            let filter = match &s.filter {
                None => "-".to_string(),
                Some(p) => predicate_text(&simplify(p)),
            };
            format!("slice(select=[{}];where={})", cols.join(","), filter)
        }
        Step::Operation(OperationStep::Aggregate(a)) => format!(
            "aggregate(func={};column={};group_by=[{}])",
            a.func.as_str(),
            a.column.as_deref().unwrap_or("-"),
            a.group_by.join(",")
        ),
        Step::Operation(OperationStep::Sort { keys }) => format!(
            "sort(keys=[{}])",
            keys.iter()
                .map(|k| format!("{}:{}", k.column, k.order.as_str()))
                .collect::<Vec<_>>()
                .join(",")
        ),
        Step::Operation(OperationStep::Limit { n }) => format!("limit(n={n})"),
        Step::Operation(OperationStep::Distinct { columns }) => {
            format!("distinct(columns=[{}])", columns.join(","))
        }
    }
}

/// Flattens nested same-kind nodes, drops duplicate siblings and unwraps
/// single children.
fn simplify(p: &Predicate) -> Predicate {
    match p {
        Predicate::Condition(_) => p.clone(),
        Predicate::And(children) | Predicate::Or(children) => {
            let is_and = matches!(p, Predicate::And(_));
            let mut flat = Vec::new();
            for c in children.iter().map(simplify) {
                match c {
                    Predicate::And(inner) if is_and => flat.extend(inner),
                    Predicate::Or(inner) if !is_and => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            let mut seen = std::collections::HashSet::new();
            flat.retain(|c| seen.insert(predicate_text(c)));
            if flat.len() == 1 {
                return flat.pop().expect("one child");
            }
            if is_and {
                Predicate::And(flat)
            } else {
                Predicate::Or(flat)
            }
        }
    }
}

fn predicate_text(p: &Predicate) -> String {
    match p {
        Predicate::Condition(c) => {
            let operand = match &c.operand {
                Operand::None => String::new(),
                Operand::Scalar(v) => format!(" {}", literal_text(v)),
                Operand::List(items) => {
                    let mut texts: Vec<String> = items.iter().map(literal_text).collect();
                    texts.sort();
                    texts.dedup();
                    format!(" [{}]", texts.join(","))
                }
            };
            format!("{} {}{}", c.column, c.comparator.as_str(), operand)
        }
        Predicate::And(children) | Predicate::Or(children) => {
            let mut texts: Vec<String> = children.iter().map(predicate_text).collect();
            texts.sort();
            texts.dedup();
            let op = if matches!(p, Predicate::And(_)) {
                "and"
            } else {
                "or"
            };
            format!("{op}({})", texts.join(","))
        }
    }
}

fn literal_text(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Boolean(b) => format!("b:{b}"),
        Value::Integer(i) => format!("i:{i}"),
        Value::Float(x) => format!("f:{}", format_float(*x)),
        Value::Text(s) => format!("s:{}", serde_json::Value::String(s.to_string())),
        Value::Timestamp(t) => format!("t:{t}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{Condition, SortKey};
    use crate::table::{ColumnType, FieldSpec};

    fn schema() -> Schema {
        Schema::new(vec![
            FieldSpec::new("A", ColumnType::Integer),
            FieldSpec::new("B", ColumnType::Integer),
            FieldSpec::new("name", ColumnType::Text),
        ])
        .unwrap()
    }

    fn filter(p: Predicate) -> AnalysisPlan {
        AnalysisPlan::new(vec![Step::filter(p)])
    }

    #[test]
    fn and_is_commutative() {
        let ab = filter(Predicate::And(vec![
            Condition::eq("A", 1i64).into(),
            Condition::eq("B", 2i64).into(),
        ]));
        let ba = filter(Predicate::And(vec![
            Condition::eq("B", 2i64).into(),
            Condition::eq("A", 1i64).into(),
        ]));
        assert_eq!(canonicalize(&ab, &schema()), canonicalize(&ba, &schema()));
    }

    #[test]
    fn deterministic_and_case_insensitive() {
        let lower = filter(Condition::eq("a", 1i64).into());
        let upper = filter(Condition::eq("A", 1i64).into());
        let c1 = canonicalize(&lower, &schema());
        assert_eq!(c1, canonicalize(&lower, &schema()));
        assert_eq!(c1, canonicalize(&upper, &schema()));
    }

    #[test]
    fn sort_direction_matters() {
        let asc = AnalysisPlan::new(vec![Step::sort(vec![SortKey::asc("A")])]);
        let desc = AnalysisPlan::new(vec![Step::sort(vec![SortKey::desc("A")])]);
        assert_ne!(canonicalize(&asc, &schema()), canonicalize(&desc, &schema()));
    }

    #[test]
    fn select_all_expands() {
        let all = AnalysisPlan::new(vec![Step::slice(Selection::All, None)]);
        let explicit = AnalysisPlan::new(vec![Step::select(["a", "b", "NAME"])]);
        assert_eq!(canonicalize(&all, &schema()), canonicalize(&explicit, &schema()));
    }

    #[test]
    fn nesting_is_flattened() {
        let nested = filter(Predicate::And(vec![
            Condition::eq("A", 1i64).into(),
            Predicate::And(vec![Condition::eq("B", 2i64).into()]),
        ]));
        let flat = filter(Predicate::And(vec![
            Condition::eq("B", 2i64).into(),
            Condition::eq("A", 1i64).into(),
        ]));
        assert_eq!(canonicalize(&nested, &schema()), canonicalize(&flat, &schema()));
    }
}
