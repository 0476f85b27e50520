// SPDX-License-Identifier: Apache-2.0

//! Level 3: one report kind, one goal, one query.
//!
//! Goals are plain text. The scripted backend recognizes the goal shapes
//! built by [`goals`] and maps each to a fixed program; the LLM backend is
//! prompted with the goal and writes the program itself.

use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::Serialize;

use super::llm::{prompts, strip_fence, ChatMessage};
use super::task::attribute;
use super::{AgentError, Backend, Mode};
use crate::model::{ReportDb, ReportKind};
use crate::query::{self, QueryResult, SandboxBudget, Value};
use crate::tdrg::Tdrg;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryAttempt {
    pub dsl: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRecord {
    pub kind: ReportKind,
    pub goal: String,
    pub attempts: Vec<QueryAttempt>,
    pub result: QueryResult,
    pub summary: String,
}

impl QueryRecord {
    /// Final program text.
    pub fn dsl(&self) -> &str {
        self.attempts.last().map(|a| a.dsl.as_str()).unwrap_or("")
    }

    pub fn json(&self) -> serde_json::Value {
        self.result.value.to_json()
    }
}

/// Builders for the goal texts the scripted expert understands.
pub mod goals {
    use crate::query::Value;

    fn list(items: &[String]) -> String {
        let v: Vec<String> = items.iter().map(|s| Value::Str(s.clone()).to_string()).collect();
        format!("[{}]", v.join(", "))
    }

    pub fn min_slack_path() -> String {
        "path ID of the minimum slack".into()
    }
    pub fn count_violating() -> String {
        "count violating paths".into()
    }
    pub fn slack_of(id: u64) -> String {
        format!("slack of path {id}")
    }
    pub fn worst_attribute(attr: &str) -> String {
        format!("worst {attr} across paths")
    }
    pub fn worst_column(col: &str) -> String {
        format!("worst stage {col} across paths")
    }
    pub fn origin_of(id: u64) -> String {
        format!("origin of path {id}")
    }
    pub fn slowest_stage(id: u64) -> String {
        format!("slowest stage in path {id}")
    }
    pub fn max_xtalk_net(id: u64) -> String {
        format!("net with max crosstalk delta in path {id}")
    }
    pub fn slew_on(net: &str, id: u64) -> String {
        format!("slew on net {} in path {id}", Value::Str(net.into()))
    }
    pub fn data_nets(id: u64) -> String {
        format!("data stage nets of path {id}")
    }
    pub fn data_nets_at(id: u64, stages: &[u32]) -> String {
        let idx: Vec<String> = stages.iter().map(|s| s.to_string()).collect();
        format!("data stage nets at indices [{}] of path {id}", idx.join(", "))
    }
    pub fn launch_of(id: u64) -> String {
        format!("launch clock and edge of the data arc of path {id}")
    }
    pub fn clock_nets(id: u64) -> String {
        format!("clock stage nets of path {id}")
    }
    pub fn slowest_three(id: u64) -> String {
        format!("three slowest stages of path {id}")
    }
    pub fn stage_table(id: u64) -> String {
        format!("data stage table of path {id}")
    }
    pub fn worst_rc(nets: &[String]) -> String {
        format!("worst RC of nets {}", list(nets))
    }
    pub fn victims(id: u64) -> String {
        format!("victims and worst aggressors on path {id}")
    }
    pub fn victims_among(id: u64, nets: &[String]) -> String {
        format!("victims and worst aggressors on path {id} among nets {}", list(nets))
    }
    pub fn aggressors_on(id: u64) -> String {
        format!("aggressors on path {id}")
    }
    pub fn aggressors_of(nets: &[String], id: u64) -> String {
        format!("aggressors of victims {} on path {id}", list(nets))
    }
    pub fn unusual_lc(nets: &[String]) -> String {
        format!("unusual constraints on nets {}", list(nets))
    }
    pub fn constraints_on(nets: &[String]) -> String {
        format!("constraints on nets {}", list(nets))
    }
    pub fn missing_clk(nets: &[String]) -> String {
        format!("clock signals without rise/fall information among nets {}", list(nets))
    }
}

type Build = fn(&Captures, ReportKind, &[String]) -> Option<String>;

struct Template {
    kinds: fn(ReportKind) -> bool,
    re: Regex,
    build: Build,
}

fn lit(s: &str) -> String {
    Value::Str(s.to_string()).to_string()
}

/// Re-renders a JSON string or integer array as a query list literal.
fn list_lit(json: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(json).ok()?;
    let items = v.as_array()?;
    let mut out = Vec::with_capacity(items.len());
    for it in items {
        match it {
            serde_json::Value::String(s) => out.push(lit(s)),
            serde_json::Value::Number(n) if n.is_u64() => out.push(n.to_string()),
            _ => return None,
        }
    }
    Some(format!("[{}]", out.join(", ")))
}

fn templates() -> &'static [Template] {
    static CELL: OnceLock<Vec<Template>> = OnceLock::new();
    CELL.get_or_init(|| {
        let path = |k: ReportKind| k.is_path_report();
        let xtalk = |k: ReportKind| k.is_xtalk();
        let t = |kinds: fn(ReportKind) -> bool, re: &str, build: Build| Template {
            kinds,
            re: Regex::new(&format!("^{re}$")).expect("template regex"),
            build,
        };
        vec![
            t(path, r"path ID of the minimum slack", |_, k, _| {
                Some(format!("from {k} | min_by(summary.slack) | get(summary.path_id)"))
            }),
            t(path, r"count violating paths", |_, k, _| {
                Some(format!("from {k} | filter(summary.slack < 0) | aggregate(count)"))
            }),
            t(path, r"slack of path (\d+)", |c, k, _| {
                Some(format!(
                    "from {k} | filter(summary.path_id = {}) | map(summary.path_id as path_id, summary.slack as slack)",
                    &c[1]
                ))
            }),
            t(path, r"worst (\w+) across paths", |c, k, _| {
                let (p, min) = attribute(&c[1])?;
                let by = if min { "min_by" } else { "max_by" };
                Some(format!("from {k} | {by}({p}) | map(summary.path_id as path_id, {p} as value)"))
            }),
            t(path, r"worst stage (delay|slew|xtalk_delta|cumulative) across paths", |c, k, _| {
                let col = &c[1];
                Some(format!("from {k}.data_stages | max_by({col}) | map(path_id, point, {col} as value)"))
            }),
            t(path, r"origin of path (\d+)", |c, k, _| {
                Some(format!("from {k} | filter(summary.path_id = {}) | get(summary.internal_external)", &c[1]))
            }),
            t(path, r"slowest stage in path (\d+)", |c, k, _| {
                Some(format!("from {k}.data_stages | filter(path_id = {}) | max_by(delay) | map(index, point)", &c[1]))
            }),
            t(path, r"net with max crosstalk delta in path (\d+)", |c, k, _| {
                Some(format!("from {k}.data_stages | filter(path_id = {}) | max_by(xtalk_delta) | get(net)", &c[1]))
            }),
            t(path, r#"slew on net ("(?:[^"\\]|\\.)*") in path (\d+)"#, |c, k, _| {
                let net: String = serde_json::from_str(&c[1]).ok()?;
                Some(format!("from {k}.data_stages | filter(path_id = {} and net = {}) | get(slew)", &c[2], lit(&net)))
            }),
            t(path, r"data stage nets of path (\d+)", |c, k, _| {
                Some(format!("from {k}.data_stages | filter(path_id = {}) | map(index, net)", &c[1]))
            }),
            t(path, r"data stage nets at indices (\[.*\]) of path (\d+)", |c, k, _| {
                let l = list_lit(&c[1])?;
                Some(format!("from {k}.data_stages | filter(path_id = {} and index in {l}) | map(index, net)", &c[2]))
            }),
            t(path, r"launch clock and edge of the data arc of path (\d+)", |c, k, _| {
                Some(format!(
                    "from {k} | filter(summary.path_id = {}) | map(data_info.launch_clock as clock, data_info.clock_edge as edge)",
                    &c[1]
                ))
            }),
            t(path, r"clock stage nets of path (\d+)", |c, k, _| {
                Some(format!("from {k}.clock_stages | filter(path_id = {}) | get(net)", &c[1]))
            }),
            t(path, r"three slowest stages of path (\d+)", |c, k, _| {
                Some(format!(
                    "from {k}.data_stages | filter(path_id = {}) | sort_by(delay, desc) | top(3) | map(index, net, delay)",
                    &c[1]
                ))
            }),
            t(path, r"data stage table of path (\d+)", |c, k, _| {
                Some(format!("from {k}.data_stages | filter(path_id = {}) | map(index, point, delay)", &c[1]))
            }),
            t(|k| k == ReportKind::Wire, r"worst RC of nets (\[.*\])", |c, _, _| {
                Some(format!("from wire | filter(net in {}) | map(net, worst_rc)", list_lit(&c[1])?))
            }),
            t(xtalk, r"victims and worst aggressors on path (\d+)", |c, k, _| {
                Some(format!("from {k} | filter(path_id = {}) | map(victim, worst_aggressor)", &c[1]))
            }),
            t(xtalk, r"victims and worst aggressors on path (\d+) among nets (\[.*\])", |c, k, _| {
                let l = list_lit(&c[2])?;
                Some(format!("from {k} | filter(path_id = {} and victim in {l}) | map(victim, worst_aggressor)", &c[1]))
            }),
            t(xtalk, r"aggressors on path (\d+)", |c, k, _| {
                Some(format!("from {k}.aggressors | filter(path_id = {}) | map(victim, net)", &c[1]))
            }),
            t(xtalk, r"aggressors of victims (\[.*\]) on path (\d+)", |c, k, _| {
                let l = list_lit(&c[1])?;
                Some(format!("from {k}.aggressors | filter(path_id = {} and victim in {l}) | map(victim, net)", &c[2]))
            }),
            t(|k| k == ReportKind::Lc, r"unusual constraints on nets (\[.*\])", |c, _, deny| {
                let d: Vec<String> = deny.iter().map(|s| lit(s)).collect();
                Some(format!(
                    "from lc | filter(net in {} and constraint_kind in [{}]) | map(net, constraint_kind, value)",
                    list_lit(&c[1])?,
                    d.join(", ")
                ))
            }),
            t(|k| k == ReportKind::Lc, r"constraints on nets (\[.*\])", |c, _, _| {
                Some(format!("from lc | filter(net in {}) | map(net, constraint_kind, value)", list_lit(&c[1])?))
            }),
            t(|k| k == ReportKind::Clk, r"clock signals without rise/fall information among nets (\[.*\])", |c, _, _| {
                Some(format!(
                    "from clk | filter(net in {} and (rise_arrival is null or fall_arrival is null)) | map(clock, net, rise_arrival, fall_arrival)",
                    list_lit(&c[1])?
                ))
            }),
        ]
    })
}

/// Program the scripted expert runs for `goal` on `kind`, if any template
/// matches.
pub fn scripted_dsl(goal: &str, kind: ReportKind, deny: &[String]) -> Option<String> {
    let goal = goal.trim();
    templates()
        .iter()
        .filter(|t| (t.kinds)(kind))
        .find_map(|t| t.re.captures(goal).and_then(|c| (t.build)(&c, kind, deny)))
}

fn summarize(r: &QueryResult) -> String {
    let text = match &r.value {
        Value::List(items) => format!("{} rows: {}", items.len(), r.value),
        v => v.to_string(),
    };
    if text.chars().count() > 240 {
        let cut: String = text.chars().take(240).collect();
        format!("{cut}...")
    } else {
        text
    }
}

fn run_dsl(text: &str, db: &ReportDb) -> Result<QueryResult, query::QueryError> {
    query::execute(&query::parse_query(text)?, db, &SandboxBudget::default())
}

/// Runs one goal against one report kind.
pub fn expert_query(
    goal: &str,
    kind: ReportKind,
    db: &ReportDb,
    graph: &Tdrg,
    backend: &Backend,
    context: &str,
) -> Result<QueryRecord, AgentError> {
    if !db.has(kind) {
        return Err(AgentError::KindAbsent(kind));
    }
    match backend.mode {
        Mode::Scripted => {
            let dsl = scripted_dsl(goal, kind, &backend.lc_deny_set)
                .ok_or_else(|| AgentError::NoTemplate(goal.to_string()))?;
            let result = run_dsl(&dsl, db).map_err(|e| AgentError::QueryFailed { dsl: dsl.clone(), error: e.to_string() })?;
            let summary = summarize(&result);
            Ok(QueryRecord {
                kind,
                goal: goal.to_string(),
                attempts: vec![QueryAttempt { dsl, error: None }],
                result,
                summary,
            })
        }
        Mode::Llm => {
            let model = backend.model()?;
            let description = graph.node(kind).map(|n| n.description.as_str()).unwrap_or("");
            let context = if context.is_empty() { "none" } else { context };
            let prompt = prompts::fill(
                prompts::EXPERT_QUERY,
                &[
                    ("kind", kind.as_str()),
                    ("description", description),
                    ("grammar", prompts::DSL_GRAMMAR),
                    ("context", context),
                    ("goal", goal),
                ],
            );
            let mut messages = vec![ChatMessage::user(prompt)];
            let mut attempts = Vec::new();
            for _ in 0..backend.llm.max_retries.max(1) {
                let reply = model.complete(&messages).map_err(|e| AgentError::Llm(e.to_string()))?;
                let dsl = strip_fence(&reply).to_string();
                let outcome = query::parse_query(&dsl).and_then(|p| {
                    if p.source.kind != kind {
                        return Err(query::QueryError::Type {
                            stage: 0,
                            expected: format!("source {kind}"),
                            found: p.source.kind.to_string(),
                        });
                    }
                    query::execute(&p, db, &SandboxBudget::default())
                });
                match outcome {
                    Ok(result) => {
                        attempts.push(QueryAttempt { dsl, error: None });
                        let summary = summarize(&result);
                        return Ok(QueryRecord { kind, goal: goal.to_string(), attempts, result, summary });
                    }
                    Err(e) => {
                        let diag = e.to_string();
                        attempts.push(QueryAttempt { dsl, error: Some(diag.clone()) });
                        messages.push(ChatMessage::assistant(reply));
                        messages.push(ChatMessage::user(prompts::fill(prompts::REPAIR, &[("diagnostic", &diag)])));
                    }
                }
            }
            let last = attempts.last().and_then(|a| a.error.clone()).unwrap_or_default();
            Err(AgentError::RetriesExhausted { last, attempts: attempts.len() })
        }
    }
}
