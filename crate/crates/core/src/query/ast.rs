// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use crate::model::ReportKind;

use super::schema::{Rec, SubTable, Ty};
use super::value::Value;

/// A parsed and type-checked query pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryProgram {
    pub source: Source,
    pub stages: Vec<Stage>,
    /// Output shape of the source (index 0) and of every stage after it.
    pub shapes: Vec<Shape>,
}

impl QueryProgram {
    pub fn output_shape(&self) -> &Shape {
        self.shapes.last().expect("source shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub kind: ReportKind,
    pub sub: Option<SubTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Filter(Pred),
    Map(Vec<Projection>),
    SortBy { key: FieldPath, desc: bool },
    Top(usize),
    MinBy(FieldPath),
    MaxBy(FieldPath),
    Aggregate { op: AggOp, path: Option<FieldPath> },
    Get(FieldPath),
    GroupBy(FieldPath),
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Filter(_) => "filter",
            Stage::Map(_) => "map",
            Stage::SortBy { .. } => "sort_by",
            Stage::Top(_) => "top",
            Stage::MinBy(_) => "min_by",
            Stage::MaxBy(_) => "max_by",
            Stage::Aggregate { .. } => "aggregate",
            Stage::Get(_) => "get",
            Stage::GroupBy(_) => "group_by",
        }
    }
}

/// Dotted field path. `index` is filled by the type checker.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    pub names: Vec<String>,
    pub index: Vec<usize>,
}

impl FieldPath {
    pub fn new(names: Vec<String>) -> Self {
        FieldPath { names, index: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub path: FieldPath,
    pub alias: Option<String>,
}

impl Projection {
    pub fn output_name(&self) -> &str {
        self.alias.as_deref().unwrap_or_else(|| self.path.names.last().expect("non-empty path"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggOp {
    Min,
    Max,
    Avg,
    Sum,
    Count,
}

impl AggOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AggOp::Min => "min",
            AggOp::Max => "max",
            AggOp::Avg => "avg",
            AggOp::Sum => "sum",
            AggOp::Count => "count",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrOp {
    Prefix,
    Suffix,
    Contains,
    Glob,
}

impl StrOp {
    pub fn as_str(self) -> &'static str {
        match self {
            StrOp::Prefix => "prefix",
            StrOp::Suffix => "suffix",
            StrOp::Contains => "contains",
            StrOp::Glob => "glob",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Path(FieldPath),
    Lit(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pred {
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Not(Box<Pred>),
    Cmp { lhs: Operand, op: CmpOp, rhs: Operand },
    In { path: FieldPath, list: Vec<Value> },
    IsNull { path: FieldPath, negated: bool },
    Str { path: FieldPath, op: StrOp, pattern: String },
    /// `any(list, pred)` / `all(list, pred)` over a list-of-records field.
    Quant { all: bool, path: FieldPath, pred: Box<Pred> },
}

/// Static shape of a pipeline value.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Stream(Rec),
    Record(Rec),
    Scalar(Ty),
    Column(Ty),
    Grouped { key: Ty, row: Rec },
}

impl Shape {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Shape::Stream(_) => "stream",
            Shape::Record(_) => "record",
            Shape::Scalar(_) => "scalar",
            Shape::Column(_) => "column",
            Shape::Grouped { .. } => "grouped",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Stream(r) => write!(f, "stream of {}", Ty::Record(r.clone())),
            Shape::Record(r) => write!(f, "record {}", Ty::Record(r.clone())),
            Shape::Scalar(t) => write!(f, "scalar {t}"),
            Shape::Column(t) => write!(f, "column of {t}"),
            Shape::Grouped { key, .. } => write!(f, "groups keyed by {key}"),
        }
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names.join("."))
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Path(p) => write!(f, "{p}"),
            Operand::Lit(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pred::And(a, b) => write!(f, "({a} and {b})"),
            Pred::Or(a, b) => write!(f, "({a} or {b})"),
            Pred::Not(p) => write!(f, "not {p}"),
            Pred::Cmp { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.as_str()),
            Pred::In { path, list } => {
                write!(f, "{path} in [")?;
                for (i, v) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Pred::IsNull { path, negated } => write!(f, "{path} is {}null", if *negated { "not " } else { "" }),
            Pred::Str { path, op, pattern } => write!(f, "{path} {} {}", op.as_str(), Value::Str(pattern.clone())),
            Pred::Quant { all, path, pred } => write!(f, "{}({path}, {pred})", if *all { "all" } else { "any" }),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Filter(p) => write!(f, "filter({p})"),
            Stage::Map(projs) => {
                f.write_str("map(")?;
                for (i, p) in projs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", p.path)?;
                    if let Some(a) = &p.alias {
                        write!(f, " as {a}")?;
                    }
                }
                f.write_str(")")
            }
            Stage::SortBy { key, desc } => write!(f, "sort_by({key}, {})", if *desc { "desc" } else { "asc" }),
            Stage::Top(k) => write!(f, "top({k})"),
            Stage::MinBy(p) => write!(f, "min_by({p})"),
            Stage::MaxBy(p) => write!(f, "max_by({p})"),
            Stage::Aggregate { op, path: Some(p) } => write!(f, "aggregate({}, {p})", op.as_str()),
            Stage::Aggregate { op, path: None } => write!(f, "aggregate({})", op.as_str()),
            Stage::Get(p) => write!(f, "get({p})"),
            Stage::GroupBy(p) => write!(f, "group_by({p})"),
        }
    }
}

impl fmt::Display for QueryProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "from {}", self.source.kind)?;
        if let Some(sub) = self.source.sub {
            write!(f, ".{}", sub.as_str())?;
        }
        for s in &self.stages {
            write!(f, " | {s}")?;
        }
        Ok(())
    }
}
