//! Reference interpreter used to check [`execute_plan`](super::execute_plan).
//!
//! Works on materialized rows, one scan per step, and shares no comparison,
//! grouping or aggregation code with the columnar executor.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::plan::{
    AggFunc, AnalysisPlan, Comparator, Operand, OperationStep, Predicate, Selection, SortOrder, Step,
};
use crate::table::{ColumnType, FieldSpec, Schema, Table, Value};

struct Frame {
    fields: Vec<FieldSpec>,
    rows: Vec<Vec<Value>>,
}

impl Frame {
    fn position(&self, name: &str) -> usize {
        self.fields
            .iter()
            .position(|f| f.name.eq_ignore_ascii_case(name))
            .unwrap_or_else(|| panic!("oracle: unknown column {name}"))
    }
}

/// Executes `plan` over `table` by brute force.
pub fn oracle_execute(plan: &AnalysisPlan, table: &Table) -> Table {
    let mut frame = Frame {
        fields: table.schema().fields().to_vec(),
        rows: table.rows().collect(),
    };
    for step in &plan.steps {
        frame = apply(step, frame);
    }
    let schema = Schema::new(frame.fields).expect("oracle produced an invalid schema");
    Table::from_rows(schema, frame.rows).expect("oracle produced an invalid table")
}

fn apply(step: &Step, frame: Frame) -> Frame {
    match step {
        Step::Slice(s) => {
            let picked: Vec<usize> = match &s.select {
                Selection::All => (0..frame.fields.len()).collect(),
                Selection::Columns(cols) => cols.iter().map(|c| frame.position(c)).collect(),
            };
            let mut rows = Vec::new();
            for row in &frame.rows {
                let keep = match &s.filter {
                    None => true,
                    Some(p) => holds(p, &frame, row),
                };
                if keep {
                    rows.push(picked.iter().map(|&i| row[i].clone()).collect());
                }
            }
            Frame {
                fields: picked.iter().map(|&i| frame.fields[i].clone()).collect(),
                rows,
            }
        }
        Step::Operation(OperationStep::Limit { n }) => Frame {
            rows: frame.rows.into_iter().take(*n).collect(),
            fields: frame.fields,
        },
        Step::Operation(OperationStep::Distinct { columns }) => {
            let picked: Vec<usize> = columns.iter().map(|c| frame.position(c)).collect();
            let mut seen = BTreeMap::new();
            let mut rows = Vec::new();
            for row in frame.rows {
                let key = fingerprint(picked.iter().map(|&i| &row[i]));
                if seen.insert(key, ()).is_none() {
                    rows.push(row);
                }
            }
            Frame {
                fields: frame.fields,
                rows,
            }
        }
        Step::Operation(OperationStep::Sort { keys }) => {
            let picked: Vec<(usize, SortOrder)> = keys
                .iter()
                .map(|k| (frame.position(&k.column), k.order))
                .collect();
            let mut indexed: Vec<(usize, Vec<Value>)> = frame.rows.into_iter().enumerate().collect();
            indexed.sort_by(|(ia, a), (ib, b)| {
                for &(c, order) in &picked {
                    let o = match (&a[c], &b[c]) {
                        (Value::Null, Value::Null) => Ordering::Equal,
                        (Value::Null, _) => Ordering::Greater,
                        (_, Value::Null) => Ordering::Less,
                        (x, y) if order == SortOrder::Desc => order_of(y, x),
                        (x, y) => order_of(x, y),
                    };
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                ia.cmp(ib)
            });
            Frame {
                fields: frame.fields,
                rows: indexed.into_iter().map(|(_, r)| r).collect(),
            }
        }
        Step::Operation(OperationStep::Aggregate(a)) => {
            let keys: Vec<usize> = a.group_by.iter().map(|g| frame.position(g)).collect();
            let source = a.column.as_ref().map(|c| frame.position(c));
            let mut order: Vec<String> = Vec::new();
            let mut groups: BTreeMap<String, (Vec<Value>, Vec<Option<Value>>)> = BTreeMap::new();
            if keys.is_empty() {
                order.push(String::new());
                groups.insert(String::new(), (Vec::new(), Vec::new()));
            }
            for row in &frame.rows {
                let key = fingerprint(keys.iter().map(|&i| &row[i]));
                let entry = groups.entry(key.clone()).or_insert_with(|| {
                    order.push(key);
                    (keys.iter().map(|&i| row[i].clone()).collect(), Vec::new())
                });
                entry.1.push(source.map(|i| row[i].clone()));
            }
            let source_field = source.map(|i| frame.fields[i].clone());
            let (name, ty) = result_column(a.func, source_field.as_ref());
            let source_type = source_field.as_ref().map_or(ColumnType::Integer, |f| f.ty);
            let mut fields: Vec<FieldSpec> = keys.iter().map(|&i| frame.fields[i].clone()).collect();
            fields.push(FieldSpec::new(name, ty));
            let rows = order
                .iter()
                .map(|k| {
                    let (key_values, members) = &groups[k];
                    let mut out = key_values.clone();
                    out.push(fold(a.func, source_type, members));
                    out
                })
                .collect();
            Frame { fields, rows }
        }
    }
}

fn result_column(func: AggFunc, source: Option<&FieldSpec>) -> (String, ColumnType) {
    let ty = match func {
        AggFunc::Count | AggFunc::DistinctCount => ColumnType::Integer,
        AggFunc::Mean | AggFunc::Median => ColumnType::Float,
        _ => source.map_or(ColumnType::Integer, |f| f.ty),
    };
    let name = match source {
        None => "count".to_string(),
        Some(f) => format!("{}_{}", func.as_str(), f.name),
    };
    (name, ty)
}

/// `ty` is the type of the aggregated column.
fn fold(func: AggFunc, ty: ColumnType, members: &[Option<Value>]) -> Value {
    let present: Vec<&Value> = members
        .iter()
        .filter_map(|m| m.as_ref())
        .filter(|v| !matches!(v, Value::Null))
        .collect();
    match func {
        AggFunc::Count => {
            let has_column = members.iter().any(Option::is_some);
            if has_column {
                Value::Integer(present.len() as i64)
            } else {
                Value::Integer(members.len() as i64)
            }
        }
        AggFunc::DistinctCount => {
            let mut set = BTreeMap::new();
            for v in &present {
                set.insert(fingerprint(std::iter::once(*v)), ());
            }
            Value::Integer(set.len() as i64)
        }
        AggFunc::Sum => {
            if ty == ColumnType::Float {
                let mut total = 0.0;
                for v in &present {
                    if let Value::Float(x) = v {
                        total += x;
                    }
                }
                Value::Float(total + 0.0)
            } else {
                let mut total: i128 = 0;
                for v in &present {
                    if let Value::Integer(i) = v {
                        total += *i as i128;
                    }
                }
                Value::Integer(total.max(i64::MIN as i128).min(i64::MAX as i128) as i64)
            }
        }
        AggFunc::Mean => {
            if present.is_empty() {
                return Value::Null;
            }
            // integers summed exactly, floats with compensated summation
            let mean = if ty == ColumnType::Integer {
                let exact: i128 = present
                    .iter()
                    .map(|v| match v {
                        Value::Integer(i) => *i as i128,
                        _ => 0,
                    })
                    .sum();
                exact as f64 / present.len() as f64
            } else {
                let (mut sum, mut carry) = (0.0f64, 0.0f64);
                for v in &present {
                    if let Value::Float(x) = v {
                        let y = x - carry;
                        let t = sum + y;
                        carry = (t - sum) - y;
                        sum = t;
                    }
                }
                sum / present.len() as f64
            };
            Value::Float(mean + 0.0)
        }
        AggFunc::Median => {
            if present.is_empty() {
                return Value::Null;
            }
            let mut xs: Vec<f64> = present
                .iter()
                .map(|v| match v {
                    Value::Integer(i) => *i as f64,
                    Value::Float(x) => *x,
                    _ => f64::NAN,
                })
                .collect();
            xs.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            let n = xs.len();
            let m = if n % 2 == 1 {
                xs[n / 2]
            } else {
                xs[n / 2 - 1] / 2.0 + xs[n / 2] / 2.0
            };
            Value::Float(m + 0.0)
        }
        AggFunc::Min | AggFunc::Max => {
            let mut best: Option<&Value> = None;
            for v in present {
                best = match best {
                    None => Some(v),
                    Some(b) => {
                        let o = order_of(v, b);
                        let better = if func == AggFunc::Min {
                            o == Ordering::Less
                        } else {
                            o == Ordering::Greater
                        };
                        Some(if better { v } else { b })
                    }
                };
            }
            best.cloned().unwrap_or(Value::Null)
        }
    }
}

fn holds(p: &Predicate, frame: &Frame, row: &[Value]) -> bool {
    match p {
        Predicate::And(children) => children.iter().all(|c| holds(c, frame, row)),
        Predicate::Or(children) => children.iter().any(|c| holds(c, frame, row)),
        Predicate::Condition(c) => {
            let cell = &row[frame.position(&c.column)];
            if let Value::Null = cell {
                return c.comparator == Comparator::IsNull;
            }
            let same = |lit: &Value| order_of(cell, lit) == Ordering::Equal;
            match (&c.operand, c.comparator) {
                (_, Comparator::IsNull) => false,
                (_, Comparator::NotNull) => true,
                (Operand::Scalar(lit), Comparator::Eq) => same(lit),
                (Operand::Scalar(lit), Comparator::Ne) => !same(lit),
                (Operand::Scalar(lit), Comparator::Lt) => order_of(cell, lit) == Ordering::Less,
                (Operand::Scalar(lit), Comparator::Le) => order_of(cell, lit) != Ordering::Greater,
                (Operand::Scalar(lit), Comparator::Gt) => order_of(cell, lit) == Ordering::Greater,
                (Operand::Scalar(lit), Comparator::Ge) => order_of(cell, lit) != Ordering::Less,
                (Operand::List(items), Comparator::In) => items.iter().any(same),
                (Operand::List(items), Comparator::NotIn) => !items.iter().any(same),
                (Operand::Scalar(Value::Text(needle)), Comparator::Contains) => match cell {
                    Value::Text(hay) => hay.find(needle.as_ref()).is_some(),
                    _ => false,
                },
                _ => false,
            }
        }
    }
}

/// Order between two non-null values of one column type.
fn order_of(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Integer(x), Value::Integer(y)) => x.cmp(y),
        (Value::Timestamp(x), Value::Timestamp(y)) => x.cmp(y),
        (Value::Boolean(x), Value::Boolean(y)) => x.cmp(y),
        (Value::Text(x), Value::Text(y)) => x.as_bytes().cmp(y.as_bytes()),
        (Value::Float(x), Value::Float(y)) => x.partial_cmp(y).expect("finite values"),
        (Value::Integer(x), Value::Float(y)) => (*x as f64).partial_cmp(y).expect("finite"),
        (Value::Float(x), Value::Integer(y)) => x.partial_cmp(&(*y as f64)).expect("finite"),
        _ => panic!("oracle: incomparable values {a:?} and {b:?}"),
    }
}

/// Injective text key for a tuple of values.
fn fingerprint<'a>(values: impl Iterator<Item = &'a Value>) -> String {
    let mut out = String::new();
    for v in values {
        let part = match v {
            Value::Null => "n".to_string(),
            Value::Boolean(b) => format!("b{b}"),
            Value::Integer(i) => format!("i{i}"),
            Value::Float(x) => format!("f{}", (x + 0.0).to_bits()),
            Value::Text(s) => format!("s{}:{s}", s.len()),
            Value::Timestamp(t) => format!("t{}", t.seconds()),
        };
        out.push_str(&part);
        out.push('\u{1}');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::execute_plan;
    use crate::plan::{Condition, SortKey};

    #[test]
    fn agrees_with_executor_on_grouped_pipeline() {
        let schema = Schema::new(vec![
            FieldSpec::new("g", ColumnType::Text),
            FieldSpec::new("x", ColumnType::Integer),
        ])
        .unwrap();
        let rows = vec![
            vec!["a".into(), Value::Integer(3)],
            vec![Value::Null, Value::Integer(1)],
            vec!["b".into(), Value::Null],
            vec!["a".into(), Value::Integer(5)],
            vec![Value::Null, Value::Integer(2)],
        ];
        let t = Table::from_rows(schema, rows).unwrap();
        let plan = AnalysisPlan::new(vec![
            Step::filter(Condition::new("x", Comparator::NotNull, Operand::None)),
            Step::aggregate(AggFunc::Mean, Some("x"), ["g"]),
            Step::sort(vec![SortKey::desc("mean_x")]),
        ]);
        let fast = execute_plan(&plan, &t).0;
        let slow = oracle_execute(&plan, &t);
        assert_eq!(fast.columns(), slow.columns());
        assert!(fast.schema().names().eq(slow.schema().names()));
        assert_eq!(slow.row(0), vec!["a".into(), Value::Float(4.0)]);
        assert_eq!(slow.row(1), vec![Value::Null, Value::Float(1.5)]);
    }
}
