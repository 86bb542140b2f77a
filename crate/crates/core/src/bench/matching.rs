use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::table::{Table, Value};

/// Relative tolerance for float cells.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

/// Above this many rows an unordered mismatch is not re-checked pairwise.
const PAIRWISE_LIMIT: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchDiff {
    Columns {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    RowCount {
        actual: usize,
        expected: usize,
    },
    Row {
        index: usize,
        actual: Vec<String>,
        expected: Vec<String>,
    },
}

impl fmt::Display for MatchDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchDiff::Columns { missing, extra } => {
                write!(f, "column mismatch: missing [{}]", missing.join(", "))?;
                write!(f, ", extra [{}]", extra.join(", "))
            }
            MatchDiff::RowCount { actual, expected } => {
                write!(f, "row count: got {actual}, expected {expected}")
            }
            MatchDiff::Row {
                index,
                actual,
                expected,
            } => write!(
                f,
                "row {index}: got ({}), expected ({})",
                actual.join(", "),
                expected.join(", ")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub matched: bool,
    pub diff: Option<MatchDiff>,
}

impl MatchVerdict {
    fn ok() -> Self {
        MatchVerdict {
            matched: true,
            diff: None,
        }
    }

    fn fail(diff: MatchDiff) -> Self {
        MatchVerdict {
            matched: false,
            diff: Some(diff),
        }
    }
}

/// Compares a produced table against ground truth.
///
/// Columns are matched by name regardless of position. Rows must correspond
/// one to one: positionally when `ordered`, as multisets otherwise. Floats
/// agree within [`FLOAT_TOLERANCE`] relative error; everything else must be
/// identical, including null placement.
pub fn strict_match(actual: &Table, expected: &Table, ordered: bool) -> MatchVerdict {
    let expected_names: Vec<&str> = expected.schema().names().collect();
    let actual_names: Vec<&str> = actual.schema().names().collect();
    let missing: Vec<String> = expected_names
        .iter()
        .filter(|n| !actual_names.contains(n))
        .map(|n| n.to_string())
        .collect();
    let extra: Vec<String> = actual_names
        .iter()
        .filter(|n| !expected_names.contains(n))
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() || actual_names.len() != expected_names.len() {
        return MatchVerdict::fail(MatchDiff::Columns { missing, extra });
    }
    if actual.row_count() != expected.row_count() {
        return MatchVerdict::fail(MatchDiff::RowCount {
            actual: actual.row_count(),
            expected: expected.row_count(),
        });
    }

    // actual rows projected into expected column order
    let order: Vec<usize> = expected_names
        .iter()
        .map(|n| actual_names.iter().position(|a| a == n).expect("names checked"))
        .collect();
    let mut got: Vec<Vec<Value>> = actual
        .rows()
        .map(|r| order.iter().map(|&i| r[i].clone()).collect())
        .collect();
    let mut want: Vec<Vec<Value>> = expected.rows().collect();

    if !ordered {
        got.sort_by(|a, b| row_order(a, b));
        want.sort_by(|a, b| row_order(a, b));
    }
    let first_bad = got.iter().zip(&want).position(|(g, w)| !rows_agree(g, w));
    match first_bad {
        None => MatchVerdict::ok(),
        Some(_) if !ordered && got.len() <= PAIRWISE_LIMIT && pairwise_cover(&got, &want) => {
            MatchVerdict::ok()
        }
        Some(i) => MatchVerdict::fail(MatchDiff::Row {
            index: i,
            actual: got[i].iter().map(Value::to_string).collect(),
            expected: want[i].iter().map(Value::to_string).collect(),
        }),
    }
}

fn row_order(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = match (x.is_null(), y.is_null()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ if x.column_type() != y.column_type() => x
                .column_type()
                .map(|t| t as u8)
                .cmp(&y.column_type().map(|t| t as u8)),
            _ => x.cmp_non_null(y),
        };
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Greedy one-to-one assignment; rescues multisets whose near-equal floats
/// sorted differently.
fn pairwise_cover(got: &[Vec<Value>], want: &[Vec<Value>]) -> bool {
    let mut used = vec![false; want.len()];
    got.iter().all(
        |g| match (0..want.len()).find(|&j| !used[j] && rows_agree(g, &want[j])) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        },
    )
}

fn rows_agree(a: &[Value], b: &[Value]) -> bool {
    a.iter().zip(b).all(|(x, y)| values_agree(x, y))
}

/// Cell equality used by [`strict_match`].
pub fn values_agree(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => floats_agree(*x, *y),
        _ => a == b,
    }
}

fn floats_agree(x: f64, y: f64) -> bool {
    x == y || (x - y).abs() <= FLOAT_TOLERANCE * x.abs().max(y.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnType, FieldSpec, Schema};

    fn table(names: [&str; 2], rows: Vec<(i64, f64)>) -> Table {
        let schema = Schema::new(vec![
            FieldSpec::new(names[0], ColumnType::Integer),
            FieldSpec::new(names[1], ColumnType::Float),
        ])
        .unwrap();
        Table::from_rows(
            schema,
            rows.into_iter()
                .map(|(a, b)| vec![Value::Integer(a), Value::Float(b)])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn reflexive() {
        let t = table(["a", "b"], vec![(1, 0.5), (2, 1.5)]);
        assert!(strict_match(&t, &t, true).matched);
        assert!(strict_match(&t, &t, false).matched);
    }

    #[test]
    fn extra_row_is_a_row_count_diff() {
        let t = table(["a", "b"], vec![(1, 0.5)]);
        let more = table(["a", "b"], vec![(1, 0.5), (2, 1.0)]);
        let v = strict_match(&t, &more, false);
        assert!(!v.matched);
        assert_eq!(
            v.diff,
            Some(MatchDiff::RowCount {
                actual: 1,
                expected: 2
            })
        );
    }

    #[test]
    fn column_permutation_is_ignored() {
        let t = table(["a", "b"], vec![(1, 0.5), (2, 1.5)]);
        let schema = Schema::new(vec![
            FieldSpec::new("b", ColumnType::Float),
            FieldSpec::new("a", ColumnType::Integer),
        ])
        .unwrap();
        let swapped = Table::from_rows(
            schema,
            vec![
                vec![Value::Float(0.5), Value::Integer(1)],
                vec![Value::Float(1.5), Value::Integer(2)],
            ],
        )
        .unwrap();
        assert!(strict_match(&swapped, &t, false).matched);
    }

    #[test]
    fn row_order_matters_only_when_ordered() {
        let t = table(["a", "b"], vec![(1, 0.5), (2, 1.5)]);
        let rev = table(["a", "b"], vec![(2, 1.5), (1, 0.5)]);
        assert!(strict_match(&rev, &t, false).matched);
        let v = strict_match(&rev, &t, true);
        assert!(!v.matched);
        assert!(matches!(v.diff, Some(MatchDiff::Row { index: 0, .. })));
    }

    #[test]
    fn float_tolerance_is_relative() {
        let t = table(["a", "b"], vec![(1, 1e6)]);
        let near = table(["a", "b"], vec![(1, 1e6 * (1.0 + 1e-12))]);
        let far = table(["a", "b"], vec![(1, 1e6 * (1.0 + 1e-6))]);
        assert!(strict_match(&near, &t, true).matched);
        assert!(!strict_match(&far, &t, true).matched);
    }

    #[test]
    fn near_equal_floats_sorting_differently_still_match() {
        let t = table(["a", "b"], vec![(2, 1.0), (1, 1.0 + 1e-12)]);
        let u = table(["a", "b"], vec![(2, 1.0 + 1e-12), (1, 1.0)]);
        let schema_swap = |t: &Table| {
            let schema = Schema::new(vec![
                FieldSpec::new("b", ColumnType::Float),
                FieldSpec::new("a", ColumnType::Integer),
            ])
            .unwrap();
            Table::from_rows(
                schema,
                t.rows().map(|r| vec![r[1].clone(), r[0].clone()]).collect(),
            )
            .unwrap()
        };
        // sorting on b first puts the rows in opposite orders
        assert!(strict_match(&schema_swap(&t), &schema_swap(&u), false).matched);
    }

    #[test]
    fn renamed_column_reports_both_sides() {
        let t = table(["a", "b"], vec![(1, 0.5)]);
        let u = table(["a", "c"], vec![(1, 0.5)]);
        let v = strict_match(&u, &t, false);
        assert_eq!(
            v.diff,
            Some(MatchDiff::Columns {
                missing: vec!["b".into()],
                extra: vec!["c".into()]
            })
        );
    }
}
