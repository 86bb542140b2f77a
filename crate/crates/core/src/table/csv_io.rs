use std::io::{Read, Write};

use super::{Schema, Table, TableError, Value};

/// Reads a UTF-8 CSV with a header row into a table bound to `schema`.
///
/// Header names resolve case-insensitively; every schema field must be
/// present and extra columns are rejected. Columns may appear in any order,
/// the resulting table always follows schema order.
pub fn load_csv<R: Read>(source: R, schema: &Schema) -> Result<Table, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| TableError::Csv(e.to_string()))?
        .clone();

    // position in the CSV -> schema index
    let mut mapping = Vec::with_capacity(headers.len());
    let mut seen = vec![false; schema.len()];
    for h in headers.iter() {
        let idx = schema
            .resolve(h.trim())
            .ok_or_else(|| TableError::Header(format!("unknown column {h:?}")))?;
        if seen[idx] {
            return Err(TableError::Header(format!("column {h:?} appears twice")));
        }
        seen[idx] = true;
        mapping.push(idx);
    }
    let missing: Vec<&str> = schema
        .fields()
        .iter()
        .zip(&seen)
        .filter(|(_, s)| !**s)
        .map(|(f, _)| f.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(TableError::Header(format!(
            "missing columns: {}",
            missing.join(", ")
        )));
    }

    let mut columns: Vec<Vec<Value>> = vec![Vec::new(); schema.len()];
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| TableError::Csv(format!("row {row}: {e}")))?;
        for (pos, raw) in record.iter().enumerate() {
            let field = schema.field(mapping[pos]);
            let value = Value::parse_cell(raw, field.ty).map_err(|reason| TableError::Cell {
                row,
                column: field.name.clone(),
                raw: raw.to_string(),
                reason,
            })?;
            if let Value::Text(s) = &value {
                if !field.admits_state(s) {
                    return Err(TableError::State {
                        row,
                        column: field.name.clone(),
                        value: s.to_string(),
                    });
                }
            }
            columns[mapping[pos]].push(value);
        }
    }
    Table::new(schema.clone(), columns)
}

/// Writes `table` as RFC 4180 CSV with a header row; nulls become empty cells.
pub fn write_csv<W: Write>(table: &Table, sink: W) -> Result<(), TableError> {
    let mut writer = csv::WriterBuilder::new().from_writer(sink);
    let csv_err = |e: csv::Error| TableError::Csv(e.to_string());
    writer.write_record(table.schema().names()).map_err(csv_err)?;
    for r in 0..table.row_count() {
        writer
            .write_record(table.columns().iter().map(|c| c[r].to_cell()))
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}
