use super::{
    AggFunc, AnalysisPlan, Comparator, Operand, OperationStep, Predicate, Selection, SortOrder, Step,
};
use crate::table::Value;

/// One plain-English sentence per step, naming every column and value.
pub fn render_steps(plan: &AnalysisPlan) -> Vec<String> {
    plan.steps.iter().map(render_step).collect()
}

pub(crate) fn render_step(step: &Step) -> String {
    match step {
        Step::Slice(s) => {
            let cols = match &s.select {
                Selection::All => "all columns".to_string(),
                Selection::Columns(c) if c.len() == 1 => format!("column {}", c[0]),
                Selection::Columns(c) => format!("columns {}", list(c)),
            };
            match &s.filter {
                None => format!("Select {cols}."),
                Some(p) => format!("Select {cols} from rows where {}.", predicate(p, true)),
            }
        }
        Step::Operation(OperationStep::Aggregate(a)) => {
            let per = if a.group_by.is_empty() {
                String::new()
            } else {
                format!(" per {}", and_list(&a.group_by))
            };
            match (a.func, &a.column) {
                (AggFunc::Count, None) => format!("Count rows{per}."),
                (AggFunc::Count, Some(c)) => format!("Count non-missing values of {c}{per}."),
                (AggFunc::DistinctCount, Some(c)) => {
                    format!("Count the distinct values of {c}{per}.")
                }
                (func, Some(c)) => format!("Compute the {} of {c}{per}.", func_word(func)),
                (func, None) => format!("Compute the {}{per}.", func_word(func)),
            }
        }
        Step::Operation(OperationStep::Sort { keys }) => {
            let parts: Vec<String> = keys
                .iter()
                .map(|k| {
                    let dir = match k.order {
                        SortOrder::Asc => "ascending",
                        SortOrder::Desc => "descending",
                    };
                    format!("{} {dir}", k.column)
                })
                .collect();
            format!("Sort rows by {}.", parts.join(", then "))
        }
        Step::Operation(OperationStep::Limit { n: 1 }) => "Keep only the first row.".to_string(),
        Step::Operation(OperationStep::Limit { n }) => format!("Keep the first {n} rows."),
        Step::Operation(OperationStep::Distinct { columns }) if columns.len() == 1 => {
            format!("Keep the first row for each distinct value of {}.", columns[0])
        }
        Step::Operation(OperationStep::Distinct { columns }) => format!(
            "Keep the first row for each distinct combination of {}.",
            list(columns)
        ),
    }
}

fn func_word(f: AggFunc) -> &'static str {
    match f {
        AggFunc::Count => "count",
        AggFunc::Sum => "sum",
        AggFunc::Mean => "mean",
        AggFunc::Min => "minimum",
        AggFunc::Max => "maximum",
        AggFunc::Median => "median",
        AggFunc::DistinctCount => "number of distinct values",
    }
}

fn list(items: &[String]) -> String {
    items.join(", ")
}

fn and_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn predicate(p: &Predicate, top: bool) -> String {
    match p {
        Predicate::Condition(c) => {
            let col = &c.column;
            match (&c.operand, c.comparator) {
                (_, Comparator::IsNull) => format!("{col} is missing"),
                (_, Comparator::NotNull) => format!("{col} is present"),
                (Operand::List(items), Comparator::In) => {
                    format!("{col} is one of ({})", values(items))
                }
                (Operand::List(items), Comparator::NotIn) => {
                    format!("{col} is not one of ({})", values(items))
                }
                (Operand::Scalar(v), Comparator::Contains) => {
                    format!("{col} contains {}", literal(v))
                }
                (Operand::Scalar(v), op) => {
                    let sym = match op {
                        Comparator::Eq => "=",
                        Comparator::Ne => "!=",
                        Comparator::Lt => "<",
                        Comparator::Le => "<=",
                        Comparator::Gt => ">",
                        Comparator::Ge => ">=",
                        other => other.as_str(),
                    };
                    format!("{col} {sym} {}", literal(v))
                }
                (_, op) => format!("{col} {}", op.as_str()),
            }
        }
        Predicate::And(children) | Predicate::Or(children) => {
            let joiner = if matches!(p, Predicate::And(_)) {
                " and "
            } else {
                " or "
            };
            let inner = children
                .iter()
                .map(|c| predicate(c, false))
                .collect::<Vec<_>>()
                .join(joiner);
            if top || children.len() == 1 {
                inner
            } else {
                format!("({inner})")
            }
        }
    }
}

fn values(items: &[Value]) -> String {
    items.iter().map(literal).collect::<Vec<_>>().join(", ")
}

fn literal(v: &Value) -> String {
    match v {
        Value::Text(s) => format!("'{s}'"),
        Value::Timestamp(t) => format!("'{t}'"),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{Condition, SortKey};

    #[test]
    fn slice_sentence_names_all_values() {
        let plan = AnalysisPlan::new(vec![Step::slice(
            Selection::Columns(vec!["test_function".into()]),
            Some(Predicate::And(vec![
                Condition::eq("release_candidate", "RC7").into(),
                Condition::eq("status", "failed").into(),
            ])),
        )]);
        assert_eq!(
            render_steps(&plan),
            vec!["Select column test_function from rows where release_candidate = 'RC7' and status = 'failed'."]
        );
    }

    #[test]
    fn group_count_sentence() {
        let plan = AnalysisPlan::new(vec![Step::aggregate(AggFunc::Count, None, ["test_function"])]);
        assert_eq!(render_steps(&plan), vec!["Count rows per test_function."]);
    }

    #[test]
    fn sort_then_limit_gives_two_sentences_in_order() {
        let plan = AnalysisPlan::new(vec![Step::sort(vec![SortKey::desc("count")]), Step::limit(5)]);
        assert_eq!(
            render_steps(&plan),
            vec!["Sort rows by count descending.", "Keep the first 5 rows."]
        );
    }

    #[test]
    fn nested_or_is_parenthesized() {
        let plan = AnalysisPlan::new(vec![Step::filter(Predicate::And(vec![
            Condition::eq("a", "x").into(),
            Predicate::Or(vec![
                Condition::eq("b", 1i64).into(),
                Condition::new("c", Comparator::IsNull, Operand::None).into(),
            ]),
        ]))]);
        assert_eq!(
            render_steps(&plan)[0],
            "Select all columns from rows where a = 'x' and (b = 1 or c is missing)."
        );
    }
}
