// SPDX-License-Identifier: Apache-2.0

//! Three-level agent: the MCMM planner picks corner/modes, a traversal agent
//! walks the relation graph per corner/mode, and per-report experts turn
//! goals into sandboxed queries.
//!
//! Two backends share every code path above the expert prompt: `Scripted`
//! maps goals to queries through fixed templates, `Llm` asks a chat model.

pub mod expert;
pub mod llm;
mod task;
mod traverse;
#[cfg(test)]
mod tests;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

pub use expert::{QueryAttempt, QueryRecord};
pub use llm::{ChatMessage, ChatModel, HttpChatModel, LlmConfig, LlmError};
pub use task::{attribute, PathRef, Scope, Selection, Task, TaskSpec, ATTRIBUTES, COLUMNS};

use crate::model::{CornerMode, Corpus, ReportKind};
use crate::query;
use crate::tdrg::{RetrievalPlan, Tdrg};
use llm::{extract_json, prompts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Scripted,
    Llm,
}

/// Default RC mismatch threshold in ps for the pair-flagging tasks.
pub const DEFAULT_RC_THRESHOLD_PS: f64 = 50.0;

#[derive(Clone)]
pub struct Backend {
    pub mode: Mode,
    pub llm: LlmConfig,
    pub rc_threshold_ps: f64,
    /// Constraint kinds that count as unusual.
    pub lc_deny_set: Vec<String>,
    model: Option<Arc<dyn ChatModel>>,
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backend")
            .field("mode", &self.mode)
            .field("llm", &self.llm)
            .field("rc_threshold_ps", &self.rc_threshold_ps)
            .field("lc_deny_set", &self.lc_deny_set)
            .field("model", &self.model.as_ref().map(|_| "<chat model>"))
            .finish()
    }
}

impl Backend {
    pub fn scripted() -> Self {
        Backend {
            mode: Mode::Scripted,
            llm: LlmConfig::default(),
            rc_threshold_ps: DEFAULT_RC_THRESHOLD_PS,
            lc_deny_set: crate::gen::default_deny_set(),
            model: None,
        }
    }

    pub fn llm(config: LlmConfig, model: Arc<dyn ChatModel>) -> Self {
        Backend { mode: Mode::Llm, llm: config, model: Some(model), ..Backend::scripted() }
    }

    pub fn model(&self) -> Result<&dyn ChatModel, AgentError> {
        self.model.as_deref().ok_or_else(|| AgentError::Llm("no chat model configured".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("scope resolves to no corner/mode in the corpus: {0}")]
    ScopeUnresolvable(String),
    #[error("no valid retrieval plan: {0}")]
    NoValidPlan(String),
    #[error("step {step} failed: {cause}")]
    StepFailed { step: usize, cause: String },
    #[error("no valid query after {attempts} attempts; last error: {last}")]
    RetriesExhausted { last: String, attempts: usize },
    #[error("report kind {0} is absent for this corner/mode")]
    KindAbsent(ReportKind),
    #[error("no query template for goal: {0}")]
    NoTemplate(String),
    #[error("query `{dsl}` failed: {error}")]
    QueryFailed { dsl: String, error: String },
    #[error("model call failed: {0}")]
    Llm(String),
    #[error("malformed model output: {0}")]
    Malformed(String),
}

/// Points at one expert query: `transcripts[corner_mode].steps[step].queries[query]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub corner_mode: CornerMode,
    pub step: usize,
    pub query: usize,
}

/// A claim is a JSON pointer into the answer value (empty for the whole).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub claim: String,
    pub sources: Vec<SourceRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub kind: ReportKind,
    pub goal: String,
    pub queries: Vec<QueryRecord>,
    pub summary: String,
}

impl StepRecord {
    fn new(kind: ReportKind, goal: &str) -> Self {
        StepRecord { kind, goal: goal.to_string(), queries: Vec::new(), summary: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmTranscript {
    pub corner_mode: CornerMode,
    pub plan: Option<RetrievalPlan>,
    pub steps: Vec<StepRecord>,
    pub answer: Option<Json>,
    pub citations: Vec<Citation>,
    pub summary: String,
    pub error: Option<String>,
}

impl CmTranscript {
    fn new(corner_mode: CornerMode) -> Self {
        CmTranscript {
            corner_mode,
            plan: None,
            steps: Vec::new(),
            answer: None,
            citations: Vec::new(),
            summary: String::new(),
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub value: Json,
    pub prose: String,
    pub citations: Vec<Citation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Answered,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRun {
    pub task: Task,
    pub mcmm_plan: Vec<CornerMode>,
    pub transcripts: Vec<CmTranscript>,
    pub answer: Option<FinalAnswer>,
    #[serde(flatten)]
    pub status: Status,
}

impl TaskRun {
    pub fn answered(&self) -> bool {
        self.status == Status::Answered
    }

    pub fn source(&self, src: &SourceRef) -> Option<&QueryRecord> {
        self.transcripts
            .iter()
            .find(|t| t.corner_mode == src.corner_mode)?
            .steps
            .get(src.step)?
            .queries
            .get(src.query)
    }
}

/// Corner/modes covered by a scope, in corpus order.
pub fn scope_corner_modes(scope: &Scope, corpus: &Corpus) -> Result<Vec<CornerMode>, AgentError> {
    let cms: Vec<CornerMode> = match scope {
        Scope::SingleCornerMode(cm) => corpus.get(cm).map(|_| vec![cm.clone()]).unwrap_or_default(),
        Scope::AllModes { corner } => corpus.corner_modes().filter(|cm| cm.corner() == corner).cloned().collect(),
        Scope::AllCornersModes => corpus.corner_modes().cloned().collect(),
    };
    if cms.is_empty() {
        let what = match scope {
            Scope::SingleCornerMode(cm) => cm.to_string(),
            Scope::AllModes { corner } => format!("corner {corner}"),
            Scope::AllCornersModes => "empty corpus".into(),
        };
        return Err(AgentError::ScopeUnresolvable(what));
    }
    Ok(cms)
}

/// Level 1. The scripted backend enumerates the scope; the model backend
/// may narrow it, but anything malformed or outside the scope falls back to
/// the enumeration.
pub fn mcmm_plan(task: &Task, corpus: &Corpus, backend: &Backend) -> Result<Vec<CornerMode>, AgentError> {
    let enumerated = scope_corner_modes(&task.scope, corpus)?;
    if backend.mode == Mode::Scripted || enumerated.len() == 1 {
        return Ok(enumerated);
    }
    let Ok(model) = backend.model() else { return Ok(enumerated) };
    let available: Vec<String> = enumerated.iter().map(|c| c.to_string()).collect();
    let prompt = prompts::fill(prompts::MCMM_PLAN, &[("available", &available.join(", ")), ("task", &task.text)]);
    let Ok(reply) = model.complete(&[ChatMessage::user(prompt)]) else { return Ok(enumerated) };
    let picked: Option<BTreeSet<CornerMode>> = extract_json(&reply).and_then(|v| {
        v.as_array()?.iter().map(|x| x.as_str().and_then(|s| s.parse().ok())).collect()
    });
    match picked {
        Some(p) if !p.is_empty() && p.iter().all(|c| enumerated.contains(c)) => {
            Ok(enumerated.into_iter().filter(|c| p.contains(c)).collect())
        }
        _ => Ok(enumerated),
    }
}

/// Runs a task end to end: plan corner/modes, traverse each in parallel,
/// merge per-corner/mode answers in corpus order.
pub fn solve(task: &Task, corpus: &Corpus, graph: &Tdrg, backend: &Backend) -> TaskRun {
    let mut run = TaskRun {
        task: task.clone(),
        mcmm_plan: Vec::new(),
        transcripts: Vec::new(),
        answer: None,
        status: Status::Answered,
    };
    match mcmm_plan(task, corpus, backend) {
        Ok(p) => run.mcmm_plan = p,
        Err(e) => {
            run.status = Status::Failed { reason: e.to_string() };
            return run;
        }
    }
    let spec = task.spec.per_mode();
    run.transcripts = run
        .mcmm_plan
        .par_iter()
        .map(|cm| {
            let db = corpus.get(cm).expect("planned corner/mode exists");
            traverse::traverse_any(&spec, &task.text, cm, db, graph, backend)
        })
        .collect();
    if let Some(t) = run.transcripts.iter().find(|t| t.error.is_some()) {
        run.status = Status::Failed { reason: format!("{}: {}", t.corner_mode, t.error.as_deref().unwrap_or_default()) };
        return run;
    }
    run.answer = Some(merge(&task.spec, &run.transcripts));
    run
}

/// Rewrites a per-corner/mode claim pointer for a merged list.
fn shift(claim: &str, prefix: &str, offset: usize) -> String {
    let rest = claim.strip_prefix(prefix).unwrap_or(claim);
    let mut it = rest.trim_start_matches('/').splitn(2, '/');
    let idx = it.next().and_then(|i| i.parse::<usize>().ok());
    match idx {
        Some(i) => match it.next() {
            Some(tail) => format!("{prefix}/{}/{tail}", i + offset),
            None => format!("{prefix}/{}", i + offset),
        },
        None => prefix.to_string(),
    }
}

fn tag(item: &Json, cm: &CornerMode) -> Json {
    let mut item = item.clone();
    if let Some(obj) = item.as_object_mut() {
        obj.insert("corner_mode".into(), json!(cm.to_string()));
    }
    item
}

fn merge(spec: &TaskSpec, trs: &[CmTranscript]) -> FinalAnswer {
    let mut citations = Vec::new();
    let prose: Vec<&str> = trs.iter().map(|t| t.summary.as_str()).collect();
    let prose = prose.join("\n");
    let answers: Vec<(&CornerMode, &Json, &[Citation])> =
        trs.iter().map(|t| (&t.corner_mode, t.answer.as_ref().expect("answered"), t.citations.as_slice())).collect();

    let value = match spec {
        TaskSpec::M6 { .. } => {
            let mut counts = serde_json::Map::new();
            let tables: Vec<Vec<Json>> =
                answers.iter().map(|(_, a, _)| a["stages"].as_array().cloned().unwrap_or_default()).collect();
            for ((cm, _, c), t) in answers.iter().zip(&tables) {
                counts.insert(cm.to_string(), json!(t.len()));
                citations.extend(c.iter().flat_map(|c| c.sources.clone()).map(|s| Citation { claim: String::new(), sources: vec![s] }));
            }
            let rows = tables.iter().map(Vec::len).min().unwrap_or(0);
            let same_len = tables.windows(2).all(|w| w[0].len() == w[1].len());
            let mut consistent = same_len;
            let mut worst: Option<(u64, String, f64)> = None;
            for r in 0..rows {
                let pts: Vec<&Json> = tables.iter().map(|t| &t[r]["point"]).collect();
                consistent &= pts.windows(2).all(|w| w[0] == w[1]);
                let ds: Vec<f64> = tables.iter().filter_map(|t| t[r]["delay"].as_f64()).collect();
                let hi = ds.iter().cloned().fold(f64::MIN, f64::max);
                let lo = ds.iter().cloned().fold(f64::MAX, f64::min);
                let delta = if ds.is_empty() { 0.0 } else { hi - lo };
                if worst.as_ref().is_none_or(|w| delta > w.2) {
                    let idx = tables[0][r]["index"].as_u64().unwrap_or(r as u64);
                    worst = Some((idx, tables[0][r]["point"].as_str().unwrap_or("").to_string(), delta));
                }
            }
            let mismatch = worst.map(|(index, point, delta)| json!({"index": index, "point": point, "delta": delta}));
            json!({"stage_counts": counts, "points_consistent": consistent, "max_delay_mismatch": mismatch})
        }
        TaskSpec::M8 | TaskSpec::M9 => {
            let mut items = Vec::new();
            for (cm, a, cs) in &answers {
                let off = items.len();
                items.extend(a.as_array().into_iter().flatten().map(|i| tag(i, cm)));
                citations.extend(cs.iter().map(|c| Citation { claim: shift(&c.claim, "", off), sources: c.sources.clone() }));
            }
            Json::Array(items)
        }
        TaskSpec::M10 => {
            let mut pairs = Vec::new();
            let mut lcs = Vec::new();
            for (cm, a, cs) in &answers {
                let (po, lo) = (pairs.len(), lcs.len());
                pairs.extend(a["rc_pairs"].as_array().into_iter().flatten().map(|i| tag(i, cm)));
                lcs.extend(a["unusual_lc"].as_array().into_iter().flatten().map(|i| tag(i, cm)));
                for c in cs.iter() {
                    let claim = if c.claim.starts_with("/rc_pairs") {
                        shift(&c.claim, "/rc_pairs", po)
                    } else {
                        shift(&c.claim, "/unusual_lc", lo)
                    };
                    citations.push(Citation { claim, sources: c.sources.clone() });
                }
            }
            json!({"rc_pairs": pairs, "unusual_lc": lcs})
        }
        _ if answers.len() == 1 => {
            citations = answers[0].2.to_vec();
            answers[0].1.clone()
        }
        _ => {
            let mut items = Vec::new();
            for (i, (cm, a, cs)) in answers.iter().enumerate() {
                items.push(json!({"corner_mode": cm.to_string(), "answer": a}));
                citations.extend(cs.iter().map(|c| Citation { claim: format!("/{i}/answer{}", c.claim), sources: c.sources.clone() }));
            }
            Json::Array(items)
        }
    };
    FinalAnswer { value, prose, citations }
}

/// Re-executes every recorded query and reports the first mismatch.
pub fn replay(run: &TaskRun, corpus: &Corpus) -> Result<(), String> {
    for t in &run.transcripts {
        let db = corpus.get(&t.corner_mode).ok_or_else(|| format!("{} not in corpus", t.corner_mode))?;
        for (si, s) in t.steps.iter().enumerate() {
            for (qi, q) in s.queries.iter().enumerate() {
                let again = query::run(q.dsl(), db).map_err(|e| format!("{} step {si} query {qi}: {e}", t.corner_mode))?;
                if again.value != q.result.value {
                    return Err(format!("{} step {si} query {qi}: result differs on replay", t.corner_mode));
                }
            }
        }
    }
    Ok(())
}

/// True when every citation resolves and the cited queries return rows.
pub fn citations_resolve(run: &TaskRun) -> bool {
    let Some(ans) = &run.answer else { return false };
    ans.citations.iter().all(|c| {
        (c.claim.is_empty() || ans.value.pointer(&c.claim).is_some())
            && !c.sources.is_empty()
            && c.sources.iter().all(|s| run.source(s).is_some())
    })
}
