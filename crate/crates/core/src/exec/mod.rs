//! Deterministic plan interpreter.
//!
//! Semantics, shared with the oracle in [`oracle`]:
//! - a null cell satisfies only `is_null`; every other comparator (including
//!   `ne` and `not_in`) is false on null;
//! - aggregates group nulls together and emit groups in order of first
//!   appearance; without `group_by` they always emit exactly one row;
//! - `count` of nothing is 0, `sum` of nothing is 0, `mean`/`median`/`min`/
//!   `max` of nothing are null;
//! - sorts are stable with nulls last in both directions;
//! - `distinct` keeps the first row of each key combination.
//!
//! A plan that passes [`validate_plan`](crate::plan::validate_plan) against
//! the table's schema cannot fail here.

pub mod oracle;

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::plan::{
    output_schema, AggFunc, Aggregate, AnalysisPlan, Comparator, Operand, OperationStep, Predicate,
    Selection, SliceStep, SortKey, SortOrder, Step,
};
use crate::table::{ColumnType, Table, Value};

pub use oracle::oracle_execute;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub kind: String,
    pub input_rows: usize,
    pub output_rows: usize,
    pub elapsed_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub steps: Vec<StepTrace>,
    pub total_us: u64,
}

/// Runs every step left to right.
pub fn execute_plan(plan: &AnalysisPlan, table: &Table) -> (Table, ExecutionTrace) {
    let start = Instant::now();
    let mut trace = ExecutionTrace::default();
    let mut current: Option<Table> = None;
    for step in &plan.steps {
        let t0 = Instant::now();
        let input = current.as_ref().unwrap_or(table);
        let next = execute_step(step, input);
        trace.steps.push(StepTrace {
            kind: step.kind().to_string(),
            input_rows: input.row_count(),
            output_rows: next.row_count(),
            elapsed_us: micros(t0.elapsed()),
        });
        current = Some(next);
    }
    trace.total_us = micros(start.elapsed());
    (current.unwrap_or_else(|| table.clone()), trace)
}

fn micros(d: Duration) -> u64 {
    u64::try_from(d.as_micros()).unwrap_or(u64::MAX)
}

/// Applies one validated step.
pub fn execute_step(step: &Step, table: &Table) -> Table {
    let schema =
        output_schema(step, table.schema()).unwrap_or_else(|e| panic!("executed an unvalidated step: {e}"));
    let columns = match step {
        Step::Slice(s) => slice(s, table),
        Step::Operation(OperationStep::Aggregate(a)) => aggregate(a, table),
        Step::Operation(OperationStep::Sort { keys }) => {
            let order = sort_order(keys, table);
            take(table, &order, &(0..table.schema().len()).collect::<Vec<_>>())
        }
        Step::Operation(OperationStep::Limit { n }) => table
            .columns()
            .iter()
            .map(|c| c[..(*n).min(c.len())].to_vec())
            .collect(),
        Step::Operation(OperationStep::Distinct { columns }) => {
            let keys = indices(table, columns);
            let mut seen = HashSet::new();
            let rows: Vec<usize> = (0..table.row_count())
                .filter(|&r| seen.insert(key_of(table, &keys, r)))
                .collect();
            take(table, &rows, &(0..table.schema().len()).collect::<Vec<_>>())
        }
    };
    Table::from_columns_unchecked(schema, columns)
}

fn index(table: &Table, name: &str) -> usize {
    table
        .schema()
        .resolve(name)
        .unwrap_or_else(|| panic!("column {name:?} missing; step was not validated"))
}

fn indices(table: &Table, names: &[String]) -> Vec<usize> {
    names.iter().map(|n| index(table, n)).collect()
}

fn key_of(table: &Table, cols: &[usize], row: usize) -> Vec<Value> {
    cols.iter().map(|&c| table.column(c)[row].clone()).collect()
}

fn take(table: &Table, rows: &[usize], cols: &[usize]) -> Vec<Vec<Value>> {
    cols.iter()
        .map(|&c| {
            let src = table.column(c);
            rows.iter().map(|&r| src[r].clone()).collect()
        })
        .collect()
}

fn slice(s: &SliceStep, table: &Table) -> Vec<Vec<Value>> {
    let rows: Vec<usize> = match &s.filter {
        None => (0..table.row_count()).collect(),
        Some(p) => {
            let mask = eval(p, table);
            (0..table.row_count()).filter(|&r| mask[r]).collect()
        }
    };
    let cols = match &s.select {
        Selection::All => (0..table.schema().len()).collect(),
        Selection::Columns(names) => indices(table, names),
    };
    take(table, &rows, &cols)
}

fn eval(p: &Predicate, table: &Table) -> Vec<bool> {
    match p {
        Predicate::Condition(c) => {
            let column = table.column(index(table, &c.column));
            column
                .iter()
                .map(|v| matches(v, c.comparator, &c.operand))
                .collect()
        }
        Predicate::And(children) => {
            let mut acc = vec![true; table.row_count()];
            for child in children {
                for (a, b) in acc.iter_mut().zip(eval(child, table)) {
                    *a &= b;
                }
            }
            acc
        }
        Predicate::Or(children) => {
            let mut acc = vec![false; table.row_count()];
            for child in children {
                for (a, b) in acc.iter_mut().zip(eval(child, table)) {
                    *a |= b;
                }
            }
            acc
        }
    }
}

fn matches(cell: &Value, op: Comparator, operand: &Operand) -> bool {
    if cell.is_null() {
        return op == Comparator::IsNull;
    }
    match (op, operand) {
        (Comparator::IsNull, _) => false,
        (Comparator::NotNull, _) => true,
        (Comparator::Eq, Operand::Scalar(v)) => cell == v,
        (Comparator::Ne, Operand::Scalar(v)) => cell != v,
        (Comparator::Lt, Operand::Scalar(v)) => cell.cmp_non_null(v) == Ordering::Less,
        (Comparator::Le, Operand::Scalar(v)) => cell.cmp_non_null(v) != Ordering::Greater,
        (Comparator::Gt, Operand::Scalar(v)) => cell.cmp_non_null(v) == Ordering::Greater,
        (Comparator::Ge, Operand::Scalar(v)) => cell.cmp_non_null(v) != Ordering::Less,
        (Comparator::In, Operand::List(vs)) => vs.contains(cell),
        (Comparator::NotIn, Operand::List(vs)) => !vs.contains(cell),
        (Comparator::Contains, Operand::Scalar(Value::Text(needle))) => {
            cell.as_text().is_some_and(|s| s.contains(needle.as_ref()))
        }
        _ => false,
    }
}

fn aggregate(a: &Aggregate, table: &Table) -> Vec<Vec<Value>> {
    let keys = indices(table, &a.group_by);
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    if keys.is_empty() {
        groups.push((0, (0..table.row_count()).collect()));
    } else {
        let mut slot: HashMap<Vec<Value>, usize> = HashMap::new();
        for r in 0..table.row_count() {
            let k = key_of(table, &keys, r);
            let g = *slot.entry(k).or_insert_with(|| {
                groups.push((r, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(r);
        }
    }
    let source_index = a.column.as_ref().map(|c| index(table, c));
    let source = source_index.map(|i| table.column(i));
    let source_type = source_index.map(|i| table.schema().field(i).ty);
    let mut out: Vec<Vec<Value>> = vec![Vec::with_capacity(groups.len()); keys.len() + 1];
    for (first, rows) in &groups {
        for (i, &k) in keys.iter().enumerate() {
            out[i].push(table.column(k)[*first].clone());
        }
        let values: Vec<&Value> = match source {
            Some(col) => rows.iter().map(|&r| &col[r]).filter(|v| !v.is_null()).collect(),
            None => Vec::new(),
        };
        out[keys.len()].push(reduce(a.func, source_type, rows.len(), &values));
    }
    out
}

fn reduce(func: AggFunc, column_type: Option<ColumnType>, row_count: usize, values: &[&Value]) -> Value {
    let has_column = column_type.is_some();
    match func {
        AggFunc::Count if !has_column => Value::Integer(row_count as i64),
        AggFunc::Count => Value::Integer(values.len() as i64),
        AggFunc::DistinctCount => {
            let set: HashSet<&Value> = values.iter().copied().collect();
            Value::Integer(set.len() as i64)
        }
        AggFunc::Sum => match values.first() {
            Some(Value::Float(_)) => Value::from(values.iter().filter_map(|v| v.as_f64()).sum::<f64>()),
            Some(Value::Integer(_)) => {
                let total: i128 = values
                    .iter()
                    .map(|v| match v {
                        Value::Integer(i) => i128::from(*i),
                        _ => 0,
                    })
                    .sum();
                Value::Integer(total.clamp(i128::from(i64::MIN), i128::from(i64::MAX)) as i64)
            }
            _ if column_type == Some(ColumnType::Float) => Value::Float(0.0),
            _ => Value::Integer(0),
        },
        AggFunc::Mean => {
            if values.is_empty() {
                Value::Null
            } else {
                let sum: f64 = values.iter().filter_map(|v| v.as_f64()).sum();
                Value::from(sum / values.len() as f64)
            }
        }
        AggFunc::Median => {
            if values.is_empty() {
                return Value::Null;
            }
            let mut xs: Vec<f64> = values.iter().filter_map(|v| v.as_f64()).collect();
            xs.sort_by(f64::total_cmp);
            let mid = xs.len() / 2;
            if xs.len() % 2 == 1 {
                Value::from(xs[mid])
            } else {
                Value::from((xs[mid - 1] + xs[mid]) / 2.0)
            }
        }
        AggFunc::Min => values
            .iter()
            .min_by(|a, b| a.cmp_non_null(b))
            .map_or(Value::Null, |v| (*v).clone()),
        AggFunc::Max => values
            .iter()
            .rev()
            .max_by(|a, b| a.cmp_non_null(b))
            .map_or(Value::Null, |v| (*v).clone()),
    }
}

fn sort_order(keys: &[SortKey], table: &Table) -> Vec<usize> {
    let cols: Vec<(usize, SortOrder)> = keys.iter().map(|k| (index(table, &k.column), k.order)).collect();
    let mut rows: Vec<usize> = (0..table.row_count()).collect();
    rows.sort_by(|&x, &y| {
        for &(c, order) in &cols {
            let col = table.column(c);
            let ord = match (col[x].is_null(), col[y].is_null()) {
                (true, true) => Ordering::Equal,
                (true, false) => Ordering::Greater,
                (false, true) => Ordering::Less,
                (false, false) => {
                    let o = col[x].cmp_non_null(&col[y]);
                    match order {
                        SortOrder::Asc => o,
                        SortOrder::Desc => o.reverse(),
                    }
                }
            };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{validate_plan, Condition};
    use crate::table::{FieldSpec, Schema};

    fn t0() -> Table {
        let schema = Schema::new(vec![
            FieldSpec::new("release_candidate", ColumnType::Text),
            FieldSpec::new("status", ColumnType::Text).with_states(["passed", "failed", "N/A", "blocked"]),
            FieldSpec::new("test_function", ColumnType::Text),
        ])
        .unwrap();
        let rows = [
            ("RC1", "failed", "braking"),
            ("RC1", "passed", "braking"),
            ("RC2", "failed", "steering"),
            ("RC1", "N/A", "braking"),
        ];
        Table::from_rows(
            schema,
            rows.iter()
                .map(|(a, b, c)| vec![(*a).into(), (*b).into(), (*c).into()])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rc1_failed_functions() {
        let plan = AnalysisPlan::new(vec![Step::slice(
            Selection::Columns(vec!["test_function".into()]),
            Some(Predicate::And(vec![
                Condition::eq("release_candidate", "RC1").into(),
                Condition::eq("status", "failed").into(),
            ])),
        )]);
        assert!(validate_plan(&plan, t0().schema()).is_empty());
        let (out, trace) = execute_plan(&plan, &t0());
        assert_eq!(out.row_count(), 1);
        assert_eq!(out.row(0), vec![Value::from("braking")]);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].input_rows, 4);
        assert_eq!(trace.steps[0].output_rows, 1);
    }

    #[test]
    fn identity_slice() {
        let plan = AnalysisPlan::new(vec![Step::slice(Selection::All, None)]);
        assert_eq!(execute_plan(&plan, &t0()).0, t0());
    }

    #[test]
    fn most_failing_function_breaks_ties_by_first_appearance() {
        let plan = AnalysisPlan::new(vec![
            Step::filter(Condition::eq("status", "failed")),
            Step::aggregate(AggFunc::Count, None, ["test_function"]),
            Step::sort(vec![SortKey::desc("count")]),
            Step::limit(1),
        ]);
        assert!(validate_plan(&plan, t0().schema()).is_empty());
        let (out, _) = execute_plan(&plan, &t0());
        assert_eq!(out.row_count(), 1);
        assert_eq!(out.row(0), vec![Value::from("braking"), Value::Integer(1)]);
    }

    #[test]
    fn empty_input_aggregates() {
        let empty = Table::empty(t0().schema().clone());
        let count = execute_step(
            &Step::aggregate(AggFunc::Count, None, Vec::<String>::new()),
            &empty,
        );
        assert_eq!(count.row_count(), 1);
        assert_eq!(count.row(0), vec![Value::Integer(0)]);

        let schema = Schema::new(vec![FieldSpec::new("x", ColumnType::Float)]).unwrap();
        let empty = Table::empty(schema);
        for func in [AggFunc::Mean, AggFunc::Median, AggFunc::Min, AggFunc::Max] {
            let out = execute_step(&Step::aggregate(func, Some("x"), Vec::<String>::new()), &empty);
            assert_eq!(out.row(0), vec![Value::Null], "{func:?}");
        }
    }

    #[test]
    fn no_match_keeps_selected_schema() {
        let plan = AnalysisPlan::new(vec![Step::slice(
            Selection::Columns(vec!["status".into()]),
            Some(Condition::eq("release_candidate", "RC9").into()),
        )]);
        let (out, _) = execute_plan(&plan, &t0());
        assert_eq!(out.row_count(), 0);
        assert_eq!(out.schema().names().collect::<Vec<_>>(), vec!["status"]);
    }

    #[test]
    fn nulls_sort_last_both_directions() {
        let schema = Schema::new(vec![FieldSpec::new("x", ColumnType::Integer)]).unwrap();
        let t = Table::from_rows(
            schema,
            vec![
                vec![Value::Null],
                vec![Value::Integer(2)],
                vec![Value::Integer(1)],
            ],
        )
        .unwrap();
        for key in [SortKey::asc("x"), SortKey::desc("x")] {
            let out = execute_step(&Step::sort(vec![key]), &t);
            assert_eq!(out.row(2), vec![Value::Null]);
        }
    }

    #[test]
    fn null_fails_ne_and_not_in() {
        let schema = Schema::new(vec![FieldSpec::new("s", ColumnType::Text)]).unwrap();
        let t = Table::from_rows(schema, vec![vec![Value::Null], vec!["a".into()]]).unwrap();
        let ne = Step::filter(Condition::new("s", Comparator::Ne, Operand::Scalar("b".into())));
        assert_eq!(execute_step(&ne, &t).row_count(), 1);
        let not_in = Step::filter(Condition::new(
            "s",
            Comparator::NotIn,
            Operand::List(vec!["b".into()]),
        ));
        assert_eq!(execute_step(&not_in, &t).row_count(), 1);
    }
}
