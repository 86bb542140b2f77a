//! Immutable, typed, columnar tables.
//!
//! A [`Table`] is a [`Schema`] plus one value vector per field. Tables are
//! never mutated after construction; every transformation in the executor
//! builds a new one.

mod canonical;
mod csv_io;
mod schema;
mod value;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canonical::{canonical_table_text, NULL_TOKEN};
pub use csv_io::{load_csv, write_csv};
pub use schema::{FieldSpec, Schema};
pub use value::{format_float, ColumnType, Timestamp, Value};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("header mismatch: {0}")]
    Header(String),
    #[error("row {row}, column {column}: cannot parse {raw:?}: {reason}")]
    Cell {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        raw: String,
        reason: String,
    },
    #[error("row {row}, column {column}: {value:?} is not one of the field's states")]
    State {
        row: usize,
        column: String,
        value: String,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("table violates its schema: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One broken table invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    /// 0-based row index; `None` for column-level problems.
    pub row: Option<usize>,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.row {
            Some(r) => write!(f, "field {} row {}: {}", self.field, r, self.reason),
            None => write!(f, "field {}: {}", self.field, self.reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Schema,
    columns: Vec<Vec<Value>>,
    row_count: usize,
}

impl Table {
    /// Builds a table and checks every invariant.
    pub fn new(schema: Schema, columns: Vec<Vec<Value>>) -> Result<Table, TableError> {
        let table = Table::from_columns_unchecked(schema, columns);
        let violations = validate(&table);
        if violations.is_empty() {
            Ok(table)
        } else {
            Err(TableError::Invalid(violations))
        }
    }

    /// Builds a table without checking it. Use [`validate`] afterwards; the
    /// executor assumes a valid table.
    pub fn from_columns_unchecked(schema: Schema, columns: Vec<Vec<Value>>) -> Table {
        let row_count = columns.first().map_or(0, Vec::len);
        Table {
            schema,
            columns,
            row_count,
        }
    }

    pub fn from_rows(schema: Schema, rows: Vec<Vec<Value>>) -> Result<Table, TableError> {
        let mut columns: Vec<Vec<Value>> = (0..schema.len())
            .map(|_| Vec::with_capacity(rows.len()))
            .collect();
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != schema.len() {
                return Err(TableError::Invalid(vec![Violation {
                    field: "*".into(),
                    row: Some(r),
                    reason: format!("row has {} cells, schema has {}", row.len(), schema.len()),
                }]));
            }
            for (c, v) in row.into_iter().enumerate() {
                columns[c].push(v);
            }
        }
        Table::new(schema, columns)
    }

    pub fn empty(schema: Schema) -> Table {
        let columns = vec![Vec::new(); schema.len()];
        Table {
            schema,
            columns,
            row_count: 0,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn columns(&self) -> &[Vec<Value>] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &[Value] {
        &self.columns[index]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[Value]> {
        self.schema.resolve(name).map(|i| self.columns[i].as_slice())
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn row(&self, index: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c[index].clone()).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<Value>> + '_ {
        (0..self.row_count).map(move |i| self.row(i))
    }

    /// First `n` rows as a new table.
    pub fn head(&self, n: usize) -> Table {
        let n = n.min(self.row_count);
        Table {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c[..n].to_vec()).collect(),
            row_count: n,
        }
    }

    /// JSON document `{"columns": [{"name","type"}], "rows": [[...]]}`.
    pub fn to_document(&self) -> TableDocument {
        TableDocument {
            columns: self
                .schema
                .fields()
                .iter()
                .map(|f| ColumnHeader {
                    name: f.name.clone(),
                    ty: f.ty,
                })
                .collect(),
            rows: self
                .rows()
                .map(|r| r.iter().map(Value::to_json).collect())
                .collect(),
        }
    }

    pub fn from_document(doc: &TableDocument) -> Result<Table, TableError> {
        let schema = Schema::new(
            doc.columns
                .iter()
                .map(|c| FieldSpec::new(c.name.clone(), c.ty))
                .collect(),
        )?;
        let mut rows = Vec::with_capacity(doc.rows.len());
        for (r, row) in doc.rows.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (c, cell) in row.iter().enumerate() {
                let field = schema
                    .fields()
                    .get(c)
                    .ok_or_else(|| TableError::Csv(format!("row {r} has more cells than columns")))?;
                out.push(
                    Value::from_json(cell, field.ty).map_err(|reason| TableError::Cell {
                        row: r + 1,
                        column: field.name.clone(),
                        raw: cell.to_string(),
                        reason,
                    })?,
                );
            }
            rows.push(out);
        }
        Table::from_rows(schema, rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnHeader {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDocument {
    pub columns: Vec<ColumnHeader>,
    pub rows: Vec<Vec<serde_json::Value>>,
}

/// Reports every violated table invariant. Empty means the table is valid.
pub fn validate(table: &Table) -> Vec<Violation> {
    let mut out = Vec::new();
    let schema = table.schema();
    if table.columns.len() != schema.len() {
        out.push(Violation {
            field: "*".into(),
            row: None,
            reason: format!(
                "table has {} columns, schema has {} fields",
                table.columns.len(),
                schema.len()
            ),
        });
    }
    for (field, column) in schema.fields().iter().zip(&table.columns) {
        if column.len() != table.row_count {
            out.push(Violation {
                field: field.name.clone(),
                row: None,
                reason: format!(
                    "column has {} values, table has {} rows",
                    column.len(),
                    table.row_count
                ),
            });
        }
        for (r, v) in column.iter().enumerate() {
            if !v.conforms_to(field.ty) {
                out.push(Violation {
                    field: field.name.clone(),
                    row: Some(r),
                    reason: format!("value {v} is not of type {}", field.ty),
                });
            } else if let Value::Float(x) = v {
                if !x.is_finite() {
                    out.push(Violation {
                        field: field.name.clone(),
                        row: Some(r),
                        reason: "non-finite float".into(),
                    });
                }
            } else if let Value::Text(s) = v {
                if !field.admits_state(s) {
                    out.push(Violation {
                        field: field.name.clone(),
                        row: Some(r),
                        reason: format!("{s:?} is not one of the field's states"),
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn status_schema() -> Schema {
        Schema::new(vec![
            FieldSpec::new("release_candidate", ColumnType::Text),
            FieldSpec::new("status", ColumnType::Text).with_states(["passed", "failed", "N/A", "blocked"]),
        ])
        .unwrap()
    }

    #[test]
    fn valid_table_has_empty_report() {
        let t = Table::from_rows(
            status_schema(),
            vec![
                vec!["RC1".into(), "failed".into()],
                vec!["RC2".into(), "N/A".into()],
            ],
        )
        .unwrap();
        assert!(validate(&t).is_empty());
    }

    #[test]
    fn injected_state_violation_is_reported_once() {
        let t = Table::from_columns_unchecked(
            status_schema(),
            vec![
                vec!["RC1".into(), "RC2".into()],
                vec!["failed".into(), "exploded".into()],
            ],
        );
        let report = validate(&t);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].field, "status");
        assert_eq!(report[0].row, Some(1));
    }

    #[test]
    fn ragged_column_names_the_field() {
        let t = Table::from_columns_unchecked(
            status_schema(),
            vec![vec!["RC1".into(), "RC2".into()], vec!["failed".into()]],
        );
        let report = validate(&t);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].field, "status");
        assert_eq!(report[0].row, None);
    }

    #[test]
    fn wrong_type_is_a_violation() {
        let t = Table::from_columns_unchecked(
            status_schema(),
            vec![vec![Value::Integer(3)], vec!["failed".into()]],
        );
        assert_eq!(validate(&t).len(), 1);
    }

    #[test]
    fn document_round_trip() {
        let schema = Schema::new(vec![
            FieldSpec::new("t", ColumnType::Timestamp),
            FieldSpec::new("x", ColumnType::Float),
            FieldSpec::new("n", ColumnType::Integer),
        ])
        .unwrap();
        let t = Table::from_rows(
            schema,
            vec![
                vec![
                    Value::Timestamp(Timestamp(86_400)),
                    Value::Float(0.1),
                    Value::Null,
                ],
                vec![Value::Null, Value::Float(2.0), Value::Integer(-4)],
            ],
        )
        .unwrap();
        let doc = t.to_document();
        let json = serde_json::to_string(&doc).unwrap();
        let back: TableDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(Table::from_document(&back).unwrap(), t);
    }
}
