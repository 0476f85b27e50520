// SPDX-License-Identifier: Apache-2.0

//! Sandboxed pipeline query language over one [`ReportDb`].
//!
//! ```text
//! from max | filter(summary.slack < 0) | sort_by(summary.slack) | top(3) | map(summary.path_id as id)
//! ```
//!
//! Programs are parsed and statically shape-checked by [`parse_query`],
//! then run by [`execute`]. [`oracle_execute`] is a deliberately naive
//! second implementation used to cross-check the executor.

mod ast;
mod check;
mod exec;
mod oracle;
mod parse;
pub mod random;
pub mod schema;
mod value;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CornerMode, ReportDb, ReportKind};

pub use ast::{AggOp, CmpOp, FieldPath, Operand, Pred, Projection, QueryProgram, Shape, Source, Stage, StrOp};
pub use value::{compare, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("syntax error at offset {position}: expected {}", expected.join(" or "))]
    Syntax { position: usize, expected: Vec<String> },
    #[error("type error at stage {stage}: expected {expected}, found {found}")]
    Type { stage: usize, expected: String, found: String },
    #[error("report kind {0} is not loaded for this corner/mode")]
    KindAbsent(ReportKind),
    #[error("sandbox budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("{op} at stage {stage} has no non-null input")]
    EmptyInput { stage: usize, op: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxBudget {
    pub max_steps: u64,
    pub max_result_rows: usize,
}

impl Default for SandboxBudget {
    fn default() -> Self {
        Self { max_steps: 10_000_000, max_result_rows: 100_000 }
    }
}

/// Position of a row in its payload; `sub` indexes a nested list
/// (stages of a path, aggressors of a victim).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowId {
    pub row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub: Option<usize>,
}

impl RowId {
    pub fn top(row: usize) -> Self {
        RowId { row, sub: None }
    }
}

/// Which rows of which report a result was computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub corner_mode: CornerMode,
    pub kind: ReportKind,
    /// Nested list the `sub` indices refer to, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    /// Sorted, deduplicated.
    pub rows: Vec<RowId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub value: Value,
    pub provenance: Provenance,
}

/// Parses and type-checks a query.
pub fn parse_query(text: &str) -> Result<QueryProgram, QueryError> {
    check::check(parse::parse(text)?)
}

pub fn execute(program: &QueryProgram, db: &ReportDb, budget: &SandboxBudget) -> Result<QueryResult, QueryError> {
    exec::execute(program, db, budget)
}

/// Reference implementation: materializes every row as a [`Value`] and
/// applies each stage to the whole intermediate list.
pub fn oracle_execute(program: &QueryProgram, db: &ReportDb, budget: &SandboxBudget) -> Result<QueryResult, QueryError> {
    oracle::execute(program, db, budget)
}

/// Parses and runs in one call.
pub fn run(text: &str, db: &ReportDb) -> Result<QueryResult, QueryError> {
    execute(&parse_query(text)?, db, &SandboxBudget::default())
}

#[cfg(test)]
mod tests;
