use std::fmt::Write;

use super::{Table, Value};

/// Rendering of a null cell. Text cells can never produce it because a
/// leading backslash in text is always escaped.
pub const NULL_TOKEN: &str = "\\N";

/// Deterministic text form of a table.
///
/// Header line `name:type` fields separated by tabs, then one line per row in
/// input order. Text escapes `\`, tab, CR and LF; floats use the shortest
/// round-trip rendering; timestamps are RFC 3339 UTC; null is [`NULL_TOKEN`].
pub fn canonical_table_text(table: &Table) -> String {
    let mut out = String::new();
    let header: Vec<String> = table
        .schema()
        .fields()
        .iter()
        .map(|f| format!("{}:{}", escape(&f.name), f.ty))
        .collect();
    out.push_str(&header.join("\t"));
    out.push('\n');
    for r in 0..table.row_count() {
        for (c, column) in table.columns().iter().enumerate() {
            if c > 0 {
                out.push('\t');
            }
            write_cell(&mut out, &column[r]);
        }
        out.push('\n');
    }
    out
}

fn write_cell(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str(NULL_TOKEN),
        Value::Text(s) => out.push_str(&escape(s)),
        other => {
            let _ = write!(out, "{other}");
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}
