use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    AggFunc, Aggregate, AnalysisPlan, Comparator, Condition, Operand, OperationStep, Predicate, Selection,
    SliceStep, SortKey, Step, MAX_PREDICATE_DEPTH,
};
use crate::table::{ColumnType, FieldSpec, Schema, Timestamp, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyPlan,
    UnknownColumn,
    /// The column existed in an earlier step's schema but was projected away.
    ColumnDropped,
    Arity,
    Type,
    State,
    Depth,
    Duplicate,
    /// A step other than `limit` follows an aggregate without `group_by`.
    AfterScalarAggregate,
    Structure,
}

/// One reason a plan is not executable against a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanViolation {
    /// 0-based step index.
    pub step: usize,
    pub kind: ViolationKind,
    pub column: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suggestions: Vec<String>,
    pub message: String,
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.step + 1, self.message)?;
        if !self.suggestions.is_empty() {
            write!(f, " (did you mean {}?)", self.suggestions.join(", "))?;
        }
        Ok(())
    }
}

/// Checks steps one at a time while threading the running output schema.
///
/// Used by [`validate_plan`] for whole plans and by the actor, which
/// realizes and checks a plan step by step.
#[derive(Debug, Clone)]
pub struct PlanChecker {
    current: Schema,
    seen: HashSet<String>,
    scalar: bool,
    index: usize,
}

impl PlanChecker {
    pub fn new(schema: &Schema) -> PlanChecker {
        PlanChecker {
            seen: schema.names().map(str::to_ascii_lowercase).collect(),
            current: schema.clone(),
            scalar: false,
            index: 0,
        }
    }

    /// Schema the next step will see.
    pub fn current(&self) -> &Schema {
        &self.current
    }

    pub fn steps_checked(&self) -> usize {
        self.index
    }

    /// Checks `step` exactly as written (names may differ in case, literal
    /// types must already match their columns) and advances on success.
    pub fn push(&mut self, step: &Step) -> Result<(), Vec<PlanViolation>> {
        self.check(step, false).map(|_| ())
    }

    /// Like [`push`](Self::push) but first rewrites names into schema casing
    /// and coerces literals; returns the normalized step.
    pub fn push_normalized(&mut self, step: &Step) -> Result<Step, Vec<PlanViolation>> {
        self.check(step, true)
    }

    fn check(&mut self, step: &Step, normalize: bool) -> Result<Step, Vec<PlanViolation>> {
        let mut cx = StepContext {
            step: self.index,
            schema: &self.current,
            seen: &self.seen,
            normalize,
            violations: Vec::new(),
        };
        if self.scalar && !matches!(step, Step::Operation(OperationStep::Limit { .. })) {
            cx.push(
                ViolationKind::AfterScalarAggregate,
                None,
                format!(
                    "a {} step cannot follow an aggregate without group_by (the result is a single row)",
                    step.kind()
                ),
            );
            return Err(cx.violations);
        }
        let normalized = match step {
            Step::Slice(s) => Step::Slice(cx.slice(s)),
            Step::Operation(op) => Step::Operation(cx.operation(op)),
        };
        if !cx.violations.is_empty() {
            return Err(cx.violations);
        }
        let next = match output_schema(&normalized, &self.current) {
            Ok(s) => s,
            Err(msg) => {
                cx.push(ViolationKind::Duplicate, None, msg);
                return Err(cx.violations);
            }
        };
        if let Step::Operation(OperationStep::Aggregate(a)) = &normalized {
            if a.group_by.is_empty() {
                self.scalar = true;
            }
        }
        for name in next.names() {
            self.seen.insert(name.to_ascii_lowercase());
        }
        self.current = next;
        self.index += 1;
        Ok(normalized)
    }
}

/// Reports every way `plan` fails to be executable against `schema`.
///
/// Checking stops at the first failing step because later steps would be
/// checked against a schema that never materializes.
pub fn validate_plan(plan: &AnalysisPlan, schema: &Schema) -> Vec<PlanViolation> {
    if plan.steps.is_empty() {
        return vec![PlanViolation {
            step: 0,
            kind: ViolationKind::EmptyPlan,
            column: None,
            suggestions: Vec::new(),
            message: "plan has no steps".into(),
        }];
    }
    let mut checker = PlanChecker::new(schema);
    for step in &plan.steps {
        if let Err(v) = checker.push(step) {
            return v;
        }
    }
    Vec::new()
}

/// Schema produced by running an already-validated `step` on `input`.
pub fn output_schema(step: &Step, input: &Schema) -> Result<Schema, String> {
    match step {
        Step::Slice(SliceStep {
            select: Selection::All,
            ..
        }) => Ok(input.clone()),
        Step::Slice(SliceStep {
            select: Selection::Columns(cols),
            ..
        }) => Schema::new(cols.iter().map(|c| lookup(input, c).clone()).collect()).map_err(|e| e.to_string()),
        Step::Operation(OperationStep::Aggregate(a)) => {
            let mut fields: Vec<FieldSpec> = a.group_by.iter().map(|g| lookup(input, g).clone()).collect();
            let source = a.column.as_ref().map(|c| lookup(input, c));
            let ty = match (a.func, source) {
                (AggFunc::Count | AggFunc::DistinctCount, _) => ColumnType::Integer,
                (AggFunc::Mean | AggFunc::Median, _) => ColumnType::Float,
                (AggFunc::Sum | AggFunc::Min | AggFunc::Max, Some(f)) => f.ty,
                (_, None) => ColumnType::Integer,
            };
            let name = match source {
                Some(f) => format!("{}_{}", a.func.as_str(), f.name),
                None => a.result_name(),
            };
            if fields.iter().any(|f| f.name.eq_ignore_ascii_case(&name)) {
                return Err(format!(
                    "aggregate result column {name:?} collides with a group_by column"
                ));
            }
            let description = match source {
                Some(f) => format!("{} of {} per group", a.func.as_str(), f.name),
                None => "number of rows per group".to_string(),
            };
            fields.push(FieldSpec::new(name, ty).describe(description));
            Schema::new(fields).map_err(|e| e.to_string())
        }
        Step::Operation(_) => Ok(input.clone()),
    }
}

fn lookup<'a>(schema: &'a Schema, name: &str) -> &'a FieldSpec {
    schema
        .get(name)
        .unwrap_or_else(|| panic!("column {name:?} not in schema; step was not validated"))
}

struct StepContext<'a> {
    step: usize,
    schema: &'a Schema,
    seen: &'a HashSet<String>,
    normalize: bool,
    violations: Vec<PlanViolation>,
}

impl<'a> StepContext<'a> {
    fn push(&mut self, kind: ViolationKind, column: Option<&str>, message: String) {
        self.violations.push(PlanViolation {
            step: self.step,
            kind,
            column: column.map(str::to_string),
            suggestions: Vec::new(),
            message,
        });
    }

    /// Resolves `name` to its field, recording a violation if absent.
    fn field(&mut self, name: &str) -> Option<&'a FieldSpec> {
        let schema = self.schema;
        if let Some(f) = schema.get(name) {
            return Some(f);
        }
        if self.seen.contains(&name.to_ascii_lowercase()) {
            self.violations.push(PlanViolation {
                step: self.step,
                kind: ViolationKind::ColumnDropped,
                column: Some(name.to_string()),
                suggestions: Vec::new(),
                message: format!(
                    "column {name:?} is not available here; an earlier step dropped it (available: {})",
                    schema.names().collect::<Vec<_>>().join(", ")
                ),
            });
        } else {
            self.violations.push(PlanViolation {
                step: self.step,
                kind: ViolationKind::UnknownColumn,
                column: Some(name.to_string()),
                suggestions: schema.near_matches(name),
                message: format!("unknown column {name:?}"),
            });
        }
        None
    }

    fn names(&mut self, names: &[String], what: &str) -> Vec<String> {
        let mut out = Vec::with_capacity(names.len());
        let mut dup = HashSet::new();
        for n in names {
            if let Some(f) = self.field(n) {
                let canonical = f.name.clone();
                if !dup.insert(canonical.to_ascii_lowercase()) {
                    self.push(
                        ViolationKind::Duplicate,
                        Some(n),
                        format!("column {canonical:?} listed twice in {what}"),
                    );
                }
                out.push(canonical);
            }
        }
        out
    }

    fn slice(&mut self, s: &SliceStep) -> SliceStep {
        let select = match &s.select {
            Selection::All => Selection::All,
            Selection::Columns(cols) => {
                if cols.is_empty() {
                    self.push(
                        ViolationKind::Arity,
                        None,
                        "select lists no columns (use \"all\" to keep every column)".into(),
                    );
                }
                Selection::Columns(self.names(cols, "select"))
            }
        };
        let filter = s.filter.as_ref().map(|p| {
            if p.depth() > MAX_PREDICATE_DEPTH {
                self.push(
                    ViolationKind::Depth,
                    None,
                    format!(
                        "predicate depth {} exceeds the maximum of {MAX_PREDICATE_DEPTH}",
                        p.depth()
                    ),
                );
            }
            self.predicate(p)
        });
        SliceStep { select, filter }
    }

    fn predicate(&mut self, p: &Predicate) -> Predicate {
        match p {
            Predicate::And(children) | Predicate::Or(children) => {
                if children.is_empty() {
                    self.push(
                        ViolationKind::Structure,
                        None,
                        "and/or node has no children".into(),
                    );
                }
                let children = children.iter().map(|c| self.predicate(c)).collect();
                match p {
                    Predicate::And(_) => Predicate::And(children),
                    _ => Predicate::Or(children),
                }
            }
            Predicate::Condition(c) => Predicate::Condition(self.condition(c)),
        }
    }

    fn condition(&mut self, c: &Condition) -> Condition {
        let Some(field) = self.field(&c.column).cloned() else {
            return c.clone();
        };
        let op = c.comparator;
        let col = field.name.as_str();
        let arity_ok = match (&c.operand, op) {
            (Operand::None, Comparator::IsNull | Comparator::NotNull) => true,
            (Operand::List(items), Comparator::In | Comparator::NotIn) => {
                if items.is_empty() {
                    self.push(
                        ViolationKind::Arity,
                        Some(col),
                        format!("{} needs a non-empty value list", op.as_str()),
                    );
                }
                true
            }
            (Operand::Scalar(_), o)
                if !matches!(
                    o,
                    Comparator::In | Comparator::NotIn | Comparator::IsNull | Comparator::NotNull
                ) =>
            {
                true
            }
            _ => false,
        };
        if !arity_ok {
            let expected = match op {
                Comparator::IsNull | Comparator::NotNull => "no value",
                Comparator::In | Comparator::NotIn => "a list of values",
                _ => "a single value",
            };
            self.push(
                ViolationKind::Arity,
                Some(col),
                format!("{} on {col:?} takes {expected}", op.as_str()),
            );
            return Condition {
                column: field.name.clone(),
                ..c.clone()
            };
        }
        if op.is_ordering() && !field.ty.is_ordered() {
            self.push(
                ViolationKind::Type,
                Some(col),
                format!(
                    "{} needs an integer, float or timestamp column; {col:?} is {}",
                    op.as_str(),
                    field.ty
                ),
            );
        }
        if op == Comparator::Contains && field.ty != ColumnType::Text {
            self.push(
                ViolationKind::Type,
                Some(col),
                format!("contains needs a text column; {col:?} is {}", field.ty),
            );
        }
        let operand = match &c.operand {
            Operand::None => Operand::None,
            Operand::Scalar(v) => Operand::Scalar(self.literal(v, &field, op)),
            Operand::List(items) => {
                Operand::List(items.iter().map(|v| self.literal(v, &field, op)).collect())
            }
        };
        Condition {
            column: field.name.clone(),
            comparator: op,
            operand,
        }
    }

    fn literal(&mut self, v: &Value, field: &FieldSpec, op: Comparator) -> Value {
        let col = field.name.as_str();
        let v = if self.normalize {
            coerce(v, field.ty)
        } else {
            v.clone()
        };
        if v.is_null() {
            self.push(
                ViolationKind::Type,
                Some(col),
                "null literal; use is_null / not_null".into(),
            );
            return v;
        }
        let expected = if op == Comparator::Contains {
            ColumnType::Text
        } else {
            field.ty
        };
        if !v.conforms_to(expected) {
            self.push(
                ViolationKind::Type,
                Some(col),
                format!(
                    "value {v} is {} but {col:?} is {expected}",
                    v.column_type().map_or("null", ColumnType::as_str)
                ),
            );
            return v;
        }
        if matches!(
            op,
            Comparator::Eq | Comparator::Ne | Comparator::In | Comparator::NotIn
        ) {
            if let (Some(states), Value::Text(s)) = (&field.states, &v) {
                if !states.iter().any(|st| st.as_str() == &**s) {
                    self.push(
                        ViolationKind::State,
                        Some(col),
                        format!(
                            "{s:?} is not a state of {col:?} (states are case-sensitive: {})",
                            states.join(", ")
                        ),
                    );
                }
            }
        }
        v
    }

    fn operation(&mut self, op: &OperationStep) -> OperationStep {
        match op {
            OperationStep::Aggregate(a) => OperationStep::Aggregate(self.aggregate(a)),
            OperationStep::Sort { keys } => {
                if keys.is_empty() {
                    self.push(ViolationKind::Arity, None, "sort has no keys".into());
                }
                let names: Vec<String> = keys.iter().map(|k| k.column.clone()).collect();
                let resolved = self.names(&names, "sort keys");
                if resolved.len() != keys.len() {
                    return op.clone();
                }
                OperationStep::Sort {
                    keys: keys
                        .iter()
                        .zip(resolved)
                        .map(|(k, column)| SortKey {
                            column,
                            order: k.order,
                        })
                        .collect(),
                }
            }
            OperationStep::Limit { n } => {
                if *n == 0 {
                    self.push(ViolationKind::Arity, None, "limit must be positive".into());
                }
                op.clone()
            }
            OperationStep::Distinct { columns } => {
                if columns.is_empty() {
                    self.push(ViolationKind::Arity, None, "distinct lists no columns".into());
                }
                OperationStep::Distinct {
                    columns: self.names(columns, "distinct"),
                }
            }
        }
    }

    fn aggregate(&mut self, a: &Aggregate) -> Aggregate {
        let group_by = self.names(&a.group_by, "group_by");
        let column = match &a.column {
            None => {
                if a.func != AggFunc::Count {
                    self.push(
                        ViolationKind::Arity,
                        None,
                        format!("{} needs a column", a.func.as_str()),
                    );
                }
                None
            }
            Some(c) => match self.field(c).cloned() {
                None => Some(c.clone()),
                Some(f) => {
                    let ok = match a.func {
                        AggFunc::Sum | AggFunc::Mean | AggFunc::Median => f.ty.is_numeric(),
                        AggFunc::Min | AggFunc::Max => f.ty.is_ordered(),
                        AggFunc::Count | AggFunc::DistinctCount => true,
                    };
                    if !ok {
                        let need = match a.func {
                            AggFunc::Min | AggFunc::Max => "an integer, float or timestamp",
                            _ => "an integer or float",
                        };
                        self.push(
                            ViolationKind::Type,
                            Some(&f.name),
                            format!(
                                "{} needs {need} column; {:?} is {}",
                                a.func.as_str(),
                                f.name,
                                f.ty
                            ),
                        );
                    }
                    if group_by.iter().any(|g| g == &f.name) {
                        self.push(
                            ViolationKind::Duplicate,
                            Some(&f.name),
                            format!("{:?} is both aggregated and a group_by key", f.name),
                        );
                    }
                    Some(f.name.clone())
                }
            },
        };
        Aggregate {
            func: a.func,
            column,
            group_by,
        }
    }
}

fn coerce(v: &Value, ty: ColumnType) -> Value {
    match (v, ty) {
        (Value::Integer(i), ColumnType::Float) => Value::from(*i as f64),
        (Value::Text(s), ColumnType::Timestamp) => match Timestamp::parse(s) {
            Some(t) => Value::Timestamp(t),
            None => v.clone(),
        },
        _ => v.clone(),
    }
}
