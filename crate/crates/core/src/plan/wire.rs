//! JSON wire format for plans.
//!
//! ```json
//! {"steps": [
//!   {"kind": "slice", "select": ["test_case_function"],
//!    "where": {"and": [{"col": "release_candidate", "op": "eq", "value": "RC7"},
//!                      {"col": "test_status", "op": "eq", "value": "failed"}]}},
//!   {"kind": "aggregate", "func": "count", "group_by": ["test_case_function"]},
//!   {"kind": "sort", "keys": [{"col": "count", "order": "desc"}]},
//!   {"kind": "limit", "n": 5}
//! ]}
//! ```
//!
//! Decoding is strict: unknown keys and unknown step kinds are errors.

use serde_json::{json, Map, Value as Json};

use super::check::PlanChecker;
use super::{
    AggFunc, Aggregate, AnalysisPlan, Comparator, Condition, Operand, OperationStep, PlanError, Predicate,
    Selection, SliceStep, SortKey, SortOrder, Step,
};
use crate::table::{Schema, Value};

/// Parses a plan document and binds it to `schema`.
///
/// Column names are resolved case-insensitively and rewritten in schema
/// casing; literals are coerced to their column's type (integer literal on a
/// float column, RFC 3339 string on a timestamp column). The result always
/// passes [`validate_plan`](super::validate_plan).
pub fn parse_plan(text: &str, schema: &Schema) -> Result<AnalysisPlan, PlanError> {
    let raw = decode_plan(text)?;
    let mut checker = PlanChecker::new(schema);
    let mut steps = Vec::with_capacity(raw.steps.len());
    let mut violations = Vec::new();
    for step in &raw.steps {
        match checker.push_normalized(step) {
            Ok(s) => steps.push(s),
            Err(v) => {
                violations.extend(v);
                break;
            }
        }
    }
    if violations.is_empty() {
        Ok(AnalysisPlan { steps })
    } else {
        Err(PlanError::Invalid(violations))
    }
}

/// Parses a single step document (`{"kind": ...}`) without binding it.
pub fn parse_step(text: &str) -> Result<Step, PlanError> {
    let doc = parse_json(strip_fences(text))?;
    decode_step(&doc, "step")
}

/// Decodes the document shape without any schema checks.
pub(crate) fn decode_plan(text: &str) -> Result<AnalysisPlan, PlanError> {
    let doc = parse_json(strip_fences(text))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| PlanError::structure("", "plan document must be an object"))?;
    reject_unknown_keys(obj, &["steps"], "")?;
    let steps = obj
        .get("steps")
        .ok_or_else(|| PlanError::structure("steps", "missing \"steps\""))?
        .as_array()
        .ok_or_else(|| PlanError::structure("steps", "\"steps\" must be an array"))?;
    if steps.is_empty() {
        return Err(PlanError::structure("steps", "plan has no steps"));
    }
    let steps = steps
        .iter()
        .enumerate()
        .map(|(i, s)| decode_step(s, &format!("steps[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AnalysisPlan { steps })
}

/// Removes one surrounding Markdown code fence, if present.
pub fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = match rest.find('\n') {
            Some(nl) => &rest[nl + 1..],
            None => rest,
        };
        let body = body.trim_end();
        return body.strip_suffix("```").unwrap_or(body).trim();
    }
    t
}

fn parse_json(text: &str) -> Result<Json, PlanError> {
    serde_json::from_str(text).map_err(|e| PlanError::Syntax {
        line: e.line(),
        column: e.column(),
        path: String::new(),
        message: e.to_string(),
    })
}

fn reject_unknown_keys(obj: &Map<String, Json>, allowed: &[&str], path: &str) -> Result<(), PlanError> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(PlanError::structure(
                join(path, key),
                format!("unexpected key {key:?} (allowed: {})", allowed.join(", ")),
            ));
        }
    }
    Ok(())
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn str_field<'a>(obj: &'a Map<String, Json>, key: &str, path: &str) -> Result<&'a str, PlanError> {
    obj.get(key)
        .ok_or_else(|| PlanError::structure(join(path, key), format!("missing {key:?}")))?
        .as_str()
        .ok_or_else(|| PlanError::structure(join(path, key), format!("{key:?} must be a string")))
}

fn name_list(json: &Json, path: &str) -> Result<Vec<String>, PlanError> {
    json.as_array()
        .ok_or_else(|| PlanError::structure(path, "expected an array of column names"))?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| PlanError::structure(format!("{path}[{i}]"), "expected a string"))
        })
        .collect()
}

fn decode_step(json: &Json, path: &str) -> Result<Step, PlanError> {
    let obj = json
        .as_object()
        .ok_or_else(|| PlanError::structure(path, "step must be an object"))?;
    let kind = str_field(obj, "kind", path)?;
    match kind {
        "slice" => {
            reject_unknown_keys(obj, &["kind", "select", "where"], path)?;
            let select = match obj.get("select") {
                None => Selection::All,
                Some(Json::String(s)) if s == "all" => Selection::All,
                Some(v @ Json::Array(_)) => Selection::Columns(name_list(v, &join(path, "select"))?),
                Some(_) => {
                    return Err(PlanError::structure(
                        join(path, "select"),
                        "\"select\" must be \"all\" or an array of column names",
                    ))
                }
            };
            let filter = match obj.get("where") {
                None | Some(Json::Null) => None,
                Some(p) => Some(decode_predicate(p, &join(path, "where"))?),
            };
            Ok(Step::Slice(SliceStep { select, filter }))
        }
        "aggregate" => {
            reject_unknown_keys(obj, &["kind", "func", "column", "group_by"], path)?;
            let func_name = str_field(obj, "func", path)?;
            let func = AggFunc::parse(func_name).ok_or_else(|| {
                PlanError::structure(
                    join(path, "func"),
                    format!(
                        "unknown aggregate {func_name:?} (allowed: {})",
                        AggFunc::ALL.map(AggFunc::as_str).join(", ")
                    ),
                )
            })?;
            let column = match obj.get("column") {
                None | Some(Json::Null) => None,
                Some(Json::String(s)) => Some(s.clone()),
                Some(_) => {
                    return Err(PlanError::structure(
                        join(path, "column"),
                        "\"column\" must be a string",
                    ))
                }
            };
            let group_by = match obj.get("group_by") {
                None | Some(Json::Null) => Vec::new(),
                Some(v) => name_list(v, &join(path, "group_by"))?,
            };
            Ok(Step::Operation(OperationStep::Aggregate(Aggregate {
                func,
                column,
                group_by,
            })))
        }
        "sort" => {
            reject_unknown_keys(obj, &["kind", "keys"], path)?;
            let keys_path = join(path, "keys");
            let keys = obj
                .get("keys")
                .and_then(Json::as_array)
                .ok_or_else(|| PlanError::structure(&keys_path, "\"keys\" must be an array"))?;
            let keys = keys
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let kp = format!("{keys_path}[{i}]");
                    let ko = k
                        .as_object()
                        .ok_or_else(|| PlanError::structure(&kp, "sort key must be an object"))?;
                    reject_unknown_keys(ko, &["col", "order"], &kp)?;
                    let column = str_field(ko, "col", &kp)?.to_string();
                    let order = match ko.get("order").map(|o| o.as_str()) {
                        None | Some(Some("asc")) => SortOrder::Asc,
                        Some(Some("desc")) => SortOrder::Desc,
                        _ => {
                            return Err(PlanError::structure(
                                join(&kp, "order"),
                                "\"order\" must be \"asc\" or \"desc\"",
                            ))
                        }
                    };
                    Ok(SortKey { column, order })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Step::Operation(OperationStep::Sort { keys }))
        }
        "limit" => {
            reject_unknown_keys(obj, &["kind", "n"], path)?;
            let n = obj.get("n").and_then(Json::as_u64).ok_or_else(|| {
                PlanError::structure(join(path, "n"), "\"n\" must be a non-negative integer")
            })?;
            let n = usize::try_from(n)
                .map_err(|_| PlanError::structure(join(path, "n"), "\"n\" is too large"))?;
            Ok(Step::Operation(OperationStep::Limit { n }))
        }
        "distinct" => {
            reject_unknown_keys(obj, &["kind", "columns"], path)?;
            let columns = match obj.get("columns") {
                Some(v) => name_list(v, &join(path, "columns"))?,
                None => return Err(PlanError::structure(join(path, "columns"), "missing \"columns\"")),
            };
            Ok(Step::Operation(OperationStep::Distinct { columns }))
        }
        other => Err(PlanError::structure(
            join(path, "kind"),
            format!("unknown step kind {other:?} (allowed: slice, aggregate, sort, limit, distinct)"),
        )),
    }
}

fn decode_predicate(json: &Json, path: &str) -> Result<Predicate, PlanError> {
    let obj = json
        .as_object()
        .ok_or_else(|| PlanError::structure(path, "predicate must be an object"))?;
    for (key, build) in [
        ("and", Predicate::And as fn(Vec<Predicate>) -> Predicate),
        ("or", Predicate::Or),
    ] {
        if let Some(children) = obj.get(key) {
            reject_unknown_keys(obj, &[key], path)?;
            let cp = join(path, key);
            let children = children
                .as_array()
                .ok_or_else(|| PlanError::structure(&cp, format!("{key:?} must be an array")))?;
            let children = children
                .iter()
                .enumerate()
                .map(|(i, c)| decode_predicate(c, &format!("{cp}[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(build(children));
        }
    }
    reject_unknown_keys(obj, &["col", "op", "value"], path)?;
    let column = str_field(obj, "col", path)?.to_string();
    let op = str_field(obj, "op", path)?;
    let comparator = Comparator::parse(op).ok_or_else(|| {
        PlanError::structure(
            join(path, "op"),
            format!(
                "unknown comparator {op:?} (allowed: {})",
                Comparator::ALL.map(Comparator::as_str).join(", ")
            ),
        )
    })?;
    let vp = join(path, "value");
    let operand = match obj.get("value") {
        None => Operand::None,
        Some(Json::Array(items)) => Operand::List(
            items
                .iter()
                .enumerate()
                .map(|(i, v)| decode_literal(v, &format!("{vp}[{i}]")))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(v) => Operand::Scalar(decode_literal(v, &vp)?),
    };
    Ok(Predicate::Condition(Condition {
        column,
        comparator,
        operand,
    }))
}

fn decode_literal(json: &Json, path: &str) -> Result<Value, PlanError> {
    match json {
        Json::Bool(b) => Ok(Value::Boolean(*b)),
        Json::String(s) => Ok(Value::Text(s.as_str().into())),
        Json::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Value::Integer(i))
            } else {
                match n.as_f64() {
                    Some(x) if x.is_finite() => Ok(Value::from(x)),
                    _ => Err(PlanError::structure(path, format!("unsupported number {n}"))),
                }
            }
        }
        Json::Null => Err(PlanError::structure(
            path,
            "null literal is not allowed; use is_null / not_null",
        )),
        _ => Err(PlanError::structure(
            path,
            "literal must be a string, number or boolean",
        )),
    }
}

/// Serializes as the wire document. Deserialization checks shape only; bind
/// with [`parse_plan`] before executing.
impl serde::Serialize for AnalysisPlan {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        plan_to_json(self).serialize(serializer)
    }
}

impl<'de> serde::Deserialize<'de> for AnalysisPlan {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = Json::deserialize(deserializer)?;
        decode_plan(&doc.to_string()).map_err(serde::de::Error::custom)
    }
}

pub fn plan_to_json(plan: &AnalysisPlan) -> Json {
    json!({ "steps": plan.steps.iter().map(step_to_json).collect::<Vec<_>>() })
}

/// Pretty-printed plan document; `parse_plan` of this is the identity on
/// validated plans.
pub fn plan_to_wire(plan: &AnalysisPlan) -> String {
    serde_json::to_string_pretty(&plan_to_json(plan)).expect("plan JSON is always serializable")
}

pub fn step_to_wire(step: &Step) -> String {
    serde_json::to_string(&step_to_json(step)).expect("step JSON is always serializable")
}

pub fn step_to_json(step: &Step) -> Json {
    match step {
        Step::Slice(s) => {
            let mut obj = Map::new();
            obj.insert("kind".into(), json!("slice"));
            obj.insert(
                "select".into(),
                match &s.select {
                    Selection::All => json!("all"),
                    Selection::Columns(c) => json!(c),
                },
            );
            if let Some(p) = &s.filter {
                obj.insert("where".into(), predicate_to_json(p));
            }
            Json::Object(obj)
        }
        Step::Operation(OperationStep::Aggregate(a)) => {
            let mut obj = Map::new();
            obj.insert("kind".into(), json!("aggregate"));
            obj.insert("func".into(), json!(a.func.as_str()));
            if let Some(c) = &a.column {
                obj.insert("column".into(), json!(c));
            }
            obj.insert("group_by".into(), json!(a.group_by));
            Json::Object(obj)
        }
        Step::Operation(OperationStep::Sort { keys }) => json!({
            "kind": "sort",
            "keys": keys
                .iter()
                .map(|k| json!({"col": k.column, "order": k.order.as_str()}))
                .collect::<Vec<_>>(),
        }),
        Step::Operation(OperationStep::Limit { n }) => json!({"kind": "limit", "n": n}),
        Step::Operation(OperationStep::Distinct { columns }) => {
            json!({"kind": "distinct", "columns": columns})
        }
    }
}

fn predicate_to_json(p: &Predicate) -> Json {
    match p {
        Predicate::And(c) => json!({"and": c.iter().map(predicate_to_json).collect::<Vec<_>>()}),
        Predicate::Or(c) => json!({"or": c.iter().map(predicate_to_json).collect::<Vec<_>>()}),
        Predicate::Condition(c) => {
            let mut obj = Map::new();
            obj.insert("col".into(), json!(c.column));
            obj.insert("op".into(), json!(c.comparator.as_str()));
            match &c.operand {
                Operand::None => {}
                Operand::Scalar(v) => {
                    obj.insert("value".into(), v.to_json());
                }
                Operand::List(vs) => {
                    obj.insert(
                        "value".into(),
                        Json::Array(vs.iter().map(Value::to_json).collect()),
                    );
                }
            }
            Json::Object(obj)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::ViolationKind;
    use crate::table::{ColumnType, FieldSpec};

    fn schema() -> Schema {
        Schema::new(vec![
            FieldSpec::new("release_candidate", ColumnType::Text),
            FieldSpec::new("status", ColumnType::Text).with_states(["passed", "failed", "N/A", "blocked"]),
            FieldSpec::new("test_function", ColumnType::Text),
            FieldSpec::new("duration_s", ColumnType::Float),
            FieldSpec::new("executed_at", ColumnType::Timestamp),
        ])
        .unwrap()
    }

    const RC7_FAILED: &str = r#"{"steps": [{"kind": "slice", "select": ["test_function"],
        "where": {"and": [{"col": "release_candidate", "op": "eq", "value": "RC7"},
                          {"col": "status", "op": "eq", "value": "failed"}]}}]}"#;

    #[test]
    fn parses_single_slice_step() {
        let plan = parse_plan(RC7_FAILED, &schema()).unwrap();
        assert_eq!(plan.len(), 1);
        let Step::Slice(s) = &plan.steps[0] else {
            panic!("expected slice")
        };
        assert_eq!(s.select, Selection::Columns(vec!["test_function".into()]));
        assert_eq!(s.filter.as_ref().unwrap().conditions().len(), 2);
    }

    #[test]
    fn strips_fences_and_resolves_casing() {
        let text = "```json\n{\"steps\":[{\"kind\":\"slice\",\"select\":[\"TEST_FUNCTION\"]}]}\n```";
        let plan = parse_plan(text, &schema()).unwrap();
        assert_eq!(plan.steps[0], Step::select(["test_function"]),);
    }

    #[test]
    fn misspelled_column_suggests_near_match() {
        let text = r#"{"steps":[{"kind":"slice","select":"all","where":
            {"col":"Relese_Candidat","op":"eq","value":"RC7"}}]}"#;
        let err = parse_plan(text, &schema()).unwrap_err();
        let v = &err.violations()[0];
        assert_eq!(v.kind, ViolationKind::UnknownColumn);
        assert_eq!(v.column.as_deref(), Some("Relese_Candidat"));
        assert_eq!(v.suggestions, vec!["release_candidate".to_string()]);
        assert!(err.to_string().contains("release_candidate"));
    }

    #[test]
    fn empty_step_list_is_a_syntax_error() {
        let err = parse_plan(r#"{"steps": []}"#, &schema()).unwrap_err();
        assert!(matches!(err, PlanError::Syntax { .. }));
    }

    #[test]
    fn json_syntax_error_has_position() {
        let err = parse_plan("{\"steps\": [\n  {\"kind\": }]}", &schema()).unwrap_err();
        match err {
            PlanError::Syntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_step_kind_is_rejected() {
        let err = parse_plan(r#"{"steps":[{"kind":"python","code":"import os"}]}"#, &schema()).unwrap_err();
        match err {
            PlanError::Syntax { path, message, .. } => {
                assert_eq!(path, "steps[0].kind");
                assert!(message.contains("python"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"steps":[{"kind":"limit","n":3,"offset":2}]}"#;
        assert!(matches!(
            parse_plan(text, &schema()),
            Err(PlanError::Syntax { .. })
        ));
    }

    #[test]
    fn literals_are_coerced_to_column_types() {
        let text = r#"{"steps":[{"kind":"slice","where":{"and":[
            {"col":"duration_s","op":"gt","value":3},
            {"col":"executed_at","op":"ge","value":"2024-01-01T00:00:00+01:00"}]}}]}"#;
        let plan = parse_plan(text, &schema()).unwrap();
        let Step::Slice(s) = &plan.steps[0] else { panic!() };
        let conds = s.filter.as_ref().unwrap().conditions();
        assert_eq!(conds[0].operand, Operand::Scalar(Value::Float(3.0)));
        assert!(matches!(conds[1].operand, Operand::Scalar(Value::Timestamp(_))));
    }

    #[test]
    fn wire_round_trip_on_normalized_plan() {
        let text = r#"{"steps":[
            {"kind":"slice","select":"all","where":{"or":[
                {"col":"status","op":"in","value":["failed","blocked"]},
                {"col":"duration_s","op":"is_null"}]}},
            {"kind":"aggregate","func":"mean","column":"duration_s","group_by":["test_function"]},
            {"kind":"sort","keys":[{"col":"mean_duration_s","order":"desc"}]},
            {"kind":"limit","n":2}]}"#;
        let plan = parse_plan(text, &schema()).unwrap();
        let again = parse_plan(&plan_to_wire(&plan), &schema()).unwrap();
        assert_eq!(plan, again);
    }
}
