//! The closed plan language.
//!
//! A plan is an ordered list of steps, each either a *slice* (column
//! selection plus row filter) or an *operation* (aggregate, sort, limit,
//! distinct). Nothing else can be expressed, which is what keeps generated
//! plans auditable: anything outside this vocabulary is rejected by
//! [`parse_plan`] and [`validate_plan`] before it gets near a table.

mod canonical;
mod check;
mod difficulty;
mod render;
mod wire;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::Value;

pub use canonical::{canonicalize, CanonicalForm};
pub use check::{output_schema, validate_plan, PlanChecker, PlanViolation, ViolationKind};
pub use difficulty::{classify_difficulty, Difficulty};
pub use render::render_steps;
pub use wire::{
    parse_plan, parse_step, plan_to_json, plan_to_wire, step_to_json, step_to_wire, strip_fences,
};

/// Maximum nesting depth of a predicate tree; a lone condition has depth 1.
pub const MAX_PREDICATE_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
    Contains,
    IsNull,
    NotNull,
}

impl Comparator {
    pub const ALL: [Comparator; 11] = [
        Comparator::Eq,
        Comparator::Ne,
        Comparator::Lt,
        Comparator::Le,
        Comparator::Gt,
        Comparator::Ge,
        Comparator::In,
        Comparator::NotIn,
        Comparator::Contains,
        Comparator::IsNull,
        Comparator::NotNull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Eq => "eq",
            Comparator::Ne => "ne",
            Comparator::Lt => "lt",
            Comparator::Le => "le",
            Comparator::Gt => "gt",
            Comparator::Ge => "ge",
            Comparator::In => "in",
            Comparator::NotIn => "not_in",
            Comparator::Contains => "contains",
            Comparator::IsNull => "is_null",
            Comparator::NotNull => "not_null",
        }
    }

    pub fn parse(s: &str) -> Option<Comparator> {
        Comparator::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn is_ordering(self) -> bool {
        matches!(
            self,
            Comparator::Lt | Comparator::Le | Comparator::Gt | Comparator::Ge
        )
    }
}

/// Right-hand side of a condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    /// `is_null` / `not_null`.
    None,
    Scalar(Value),
    /// `in` / `not_in`.
    List(Vec<Value>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub column: String,
    pub comparator: Comparator,
    pub operand: Operand,
}

impl Condition {
    pub fn new(column: impl Into<String>, comparator: Comparator, operand: Operand) -> Self {
        Condition {
            column: column.into(),
            comparator,
            operand,
        }
    }

    pub fn eq(column: impl Into<String>, value: impl Into<Value>) -> Self {
        Condition::new(column, Comparator::Eq, Operand::Scalar(value.into()))
    }
}

/// Boolean tree of conditions. There is no `not`; use `ne`/`not_in`.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Condition(Condition),
}

impl Predicate {
    pub fn depth(&self) -> usize {
        match self {
            Predicate::Condition(_) => 1,
            Predicate::And(children) | Predicate::Or(children) => {
                1 + children.iter().map(Predicate::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn conditions(&self) -> Vec<&Condition> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Condition>) {
        match self {
            Predicate::Condition(c) => out.push(c),
            Predicate::And(children) | Predicate::Or(children) => {
                for c in children {
                    c.collect(out);
                }
            }
        }
    }
}

impl From<Condition> for Predicate {
    fn from(c: Condition) -> Self {
        Predicate::Condition(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    All,
    Columns(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceStep {
    pub select: Selection,
    pub filter: Option<Predicate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFunc {
    Count,
    Sum,
    Mean,
    Min,
    Max,
    Median,
    DistinctCount,
}

impl AggFunc {
    pub const ALL: [AggFunc; 7] = [
        AggFunc::Count,
        AggFunc::Sum,
        AggFunc::Mean,
        AggFunc::Min,
        AggFunc::Max,
        AggFunc::Median,
        AggFunc::DistinctCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Mean => "mean",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::Median => "median",
            AggFunc::DistinctCount => "distinct_count",
        }
    }

    pub fn parse(s: &str) -> Option<AggFunc> {
        AggFunc::ALL.into_iter().find(|f| f.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub func: AggFunc,
    pub column: Option<String>,
    pub group_by: Vec<String>,
}

impl Aggregate {
    /// Output column name: `<func>_<column>`, or `count` for a bare count.
    pub fn result_name(&self) -> String {
        match &self.column {
            Some(c) => format!("{}_{}", self.func.as_str(), c),
            None => self.func.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    Asc,
    Desc,
}

impl SortOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            SortOrder::Asc => "asc",
            SortOrder::Desc => "desc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub column: String,
    pub order: SortOrder,
}

impl SortKey {
    pub fn asc(column: impl Into<String>) -> Self {
        SortKey {
            column: column.into(),
            order: SortOrder::Asc,
        }
    }

    pub fn desc(column: impl Into<String>) -> Self {
        SortKey {
            column: column.into(),
            order: SortOrder::Desc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperationStep {
    Aggregate(Aggregate),
    Sort {
        keys: Vec<SortKey>,
    },
    Limit {
        n: usize,
    },
    /// Keeps the first row of each distinct combination of `columns`; all
    /// columns are retained.
    Distinct {
        columns: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Slice(SliceStep),
    Operation(OperationStep),
}

impl Step {
    pub fn kind(&self) -> &'static str {
        match self {
            Step::Slice(_) => "slice",
            Step::Operation(OperationStep::Aggregate(_)) => "aggregate",
            Step::Operation(OperationStep::Sort { .. }) => "sort",
            Step::Operation(OperationStep::Limit { .. }) => "limit",
            Step::Operation(OperationStep::Distinct { .. }) => "distinct",
        }
    }

    pub fn slice(select: Selection, filter: Option<Predicate>) -> Step {
        Step::Slice(SliceStep { select, filter })
    }

    pub fn select<I, S>(columns: I) -> Step
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Step::slice(
            Selection::Columns(columns.into_iter().map(Into::into).collect()),
            None,
        )
    }

    pub fn filter(predicate: impl Into<Predicate>) -> Step {
        Step::slice(Selection::All, Some(predicate.into()))
    }

    pub fn aggregate<S: Into<String>>(
        func: AggFunc,
        column: Option<&str>,
        group_by: impl IntoIterator<Item = S>,
    ) -> Step {
        Step::Operation(OperationStep::Aggregate(Aggregate {
            func,
            column: column.map(str::to_string),
            group_by: group_by.into_iter().map(Into::into).collect(),
        }))
    }

    pub fn sort(keys: Vec<SortKey>) -> Step {
        Step::Operation(OperationStep::Sort { keys })
    }

    pub fn limit(n: usize) -> Step {
        Step::Operation(OperationStep::Limit { n })
    }

    pub fn distinct<I, S>(columns: I) -> Step
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Step::Operation(OperationStep::Distinct {
            columns: columns.into_iter().map(Into::into).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisPlan {
    pub steps: Vec<Step>,
}

impl AnalysisPlan {
    pub fn new(steps: Vec<Step>) -> Self {
        AnalysisPlan { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The first `len` steps.
    pub fn prefix(&self, len: usize) -> AnalysisPlan {
        AnalysisPlan {
            steps: self.steps[..len.min(self.steps.len())].to_vec(),
        }
    }

    /// True when the result's row order is part of the answer: the last step
    /// that can reorder rows is a sort.
    pub fn ends_in_sort_order(&self) -> bool {
        for step in self.steps.iter().rev() {
            match step {
                Step::Operation(OperationStep::Sort { .. }) => return true,
                Step::Operation(OperationStep::Aggregate(_)) => return false,
                _ => {}
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    /// Malformed document. `line`/`column` are 1-based positions for JSON
    /// syntax errors and 0 for structural errors, which carry a `path`.
    #[error("syntax error at {}: {message}", location(*line, *column, path))]
    Syntax {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },
    #[error("{}", describe_violations(.0))]
    Invalid(Vec<PlanViolation>),
}

fn location(line: usize, column: usize, path: &str) -> String {
    if line > 0 {
        format!("line {line}, column {column}")
    } else if path.is_empty() {
        "document".to_string()
    } else {
        path.to_string()
    }
}

fn describe_violations(v: &[PlanViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl PlanError {
    pub(crate) fn structure(path: impl Into<String>, message: impl Into<String>) -> Self {
        PlanError::Syntax {
            line: 0,
            column: 0,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn violations(&self) -> &[PlanViolation] {
        match self {
            PlanError::Invalid(v) => v,
            PlanError::Syntax { .. } => &[],
        }
    }
}

impl fmt::Display for AnalysisPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&plan_to_wire(self))
    }
}
