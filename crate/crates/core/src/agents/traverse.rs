// SPDX-License-Identifier: Apache-2.0

//! Level 2: walk a retrieval plan for one corner/mode, wiring each step's
//! output into later goals.

use std::collections::{BTreeSet, HashMap};

use serde_json::{json, Value as Json};

use super::expert::{expert_query, goals, QueryRecord};
use super::llm::{extract_json, prompts, ChatMessage};
use super::task::{PathRef, Selection, TaskSpec};
use super::{AgentError, Backend, Citation, CmTranscript, Mode, SourceRef, StepRecord};
use crate::model::{CornerMode, ReportDb, ReportKind};
use crate::tdrg::{plan_route, validate_plan, PlanStep, RetrievalPlan, Tdrg};

type Facts<T> = Option<(T, SourceRef)>;

struct Session<'a> {
    cm: &'a CornerMode,
    db: &'a ReportDb,
    graph: &'a Tdrg,
    backend: &'a Backend,
    steps: Vec<StepRecord>,
}

impl Session<'_> {
    fn context(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            for q in &s.queries {
                out.push_str(&format!("step {} ({}): {} -> {}\n", i + 1, s.kind, q.goal, q.summary));
            }
        }
        out
    }

    fn ask(&mut self, goal: String) -> Result<(Json, SourceRef), AgentError> {
        let step = self.steps.len() - 1;
        let kind = self.steps[step].kind;
        let context = self.context();
        let rec: QueryRecord = expert_query(&goal, kind, self.db, self.graph, self.backend, &context)
            .map_err(|e| AgentError::StepFailed { step: step + 1, cause: e.to_string() })?;
        let value = rec.json();
        let src = SourceRef { corner_mode: self.cm.clone(), step, query: self.steps[step].queries.len() };
        self.steps[step].queries.push(rec);
        Ok((value, src))
    }

    fn fail(&self, cause: impl Into<String>) -> AgentError {
        AgentError::StepFailed { step: self.steps.len(), cause: cause.into() }
    }
}

fn arr(v: &Json) -> &[Json] {
    v.as_array().map(Vec::as_slice).unwrap_or(&[])
}

fn s(v: &Json, k: &str) -> String {
    v.get(k).and_then(Json::as_str).unwrap_or_default().to_string()
}

fn f(v: &Json, k: &str) -> Option<f64> {
    v.get(k).and_then(Json::as_f64)
}

fn u(v: &Json, k: &str) -> Option<u64> {
    v.get(k).and_then(Json::as_u64)
}

fn dedup(nets: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    nets.into_iter().filter(|n| seen.insert(n.clone())).collect()
}

/// Everything retrieved so far for one corner/mode.
#[derive(Default)]
struct Facts2 {
    path: Facts<u64>,
    single: Facts<Json>,
    data_nets: Facts<Vec<(u32, String)>>,
    clock_nets: Facts<Vec<String>>,
    slow: Facts<Vec<(u32, String, f64)>>,
    table: Facts<Vec<Json>>,
    /// Per selection: path id and selected (index, net).
    selected: Vec<(u64, Vec<(u32, String)>, SourceRef)>,
    victims: Vec<(String, String, SourceRef)>,
    aggressors: Facts<Vec<(String, String)>>,
    rc: HashMap<String, (f64, SourceRef)>,
    lc: Facts<Vec<Json>>,
    missing: Facts<Vec<Json>>,
}

struct Flow<'s, 'a> {
    spec: &'s TaskSpec,
    ss: &'s mut Session<'a>,
    facts: Facts2,
}

impl Flow<'_, '_> {
    fn path_ref(&self) -> Option<PathRef> {
        match self.spec {
            TaskSpec::M1 { path } | TaskSpec::M2 { path } | TaskSpec::M3 { path } | TaskSpec::M4 { path } | TaskSpec::M5 { path } => {
                Some(*path)
            }
            TaskSpec::M8 | TaskSpec::M9 | TaskSpec::M10 => Some(PathRef::WorstSlack),
            TaskSpec::M6 { path_id } => Some(PathRef::Id(*path_id)),
            _ => None,
        }
    }

    fn path_id(&self) -> Result<u64, AgentError> {
        self.facts.path.as_ref().map(|p| p.0).ok_or_else(|| self.ss.fail("path id not resolved by an earlier max step"))
    }

    fn resolve_path(&mut self, r: PathRef) -> Result<u64, AgentError> {
        let (id, src) = match r {
            PathRef::WorstSlack => {
                let (v, src) = self.ss.ask(goals::min_slack_path())?;
                (v.as_u64().ok_or_else(|| self.ss.fail("minimum-slack query returned no path id"))?, src)
            }
            PathRef::Id(id) => {
                let (v, src) = self.ss.ask(goals::slack_of(id))?;
                if arr(&v).is_empty() {
                    return Err(self.ss.fail(format!("path {id} not in report")));
                }
                (id, src)
            }
        };
        self.facts.path = Some((id, src));
        Ok(id)
    }

    fn on_max(&mut self) -> Result<(), AgentError> {
        if let Some(r) = self.path_ref() {
            let id = self.resolve_path(r)?;
            match self.spec {
                TaskSpec::M1 { .. } | TaskSpec::M8 => {
                    let (v, src) = self.ss.ask(goals::clock_nets(id))?;
                    let nets = arr(&v).iter().filter_map(|n| n.as_str().map(str::to_string)).collect();
                    self.facts.clock_nets = Some((nets, src));
                }
                TaskSpec::M2 { .. } | TaskSpec::M10 => {
                    let (v, src) = self.ss.ask(goals::data_nets(id))?;
                    let nets = arr(&v).iter().map(|r| (u(r, "index").unwrap_or(0) as u32, s(r, "net"))).collect();
                    self.facts.data_nets = Some((nets, src));
                }
                TaskSpec::M5 { .. } => {
                    let (v, src) = self.ss.ask(goals::slowest_three(id))?;
                    let rows = arr(&v)
                        .iter()
                        .map(|r| (u(r, "index").unwrap_or(0) as u32, s(r, "net"), f(r, "delay").unwrap_or(0.0)))
                        .collect();
                    self.facts.slow = Some((rows, src));
                }
                TaskSpec::M6 { .. } => {
                    let (v, src) = self.ss.ask(goals::stage_table(id))?;
                    self.facts.table = Some((arr(&v).to_vec(), src));
                }
                _ => {}
            }
            return Ok(());
        }
        let goal = match self.spec {
            TaskSpec::CheckViolation { path_id } => goals::slack_of(*path_id),
            TaskSpec::WorstAttribute { attribute } => goals::worst_attribute(attribute),
            TaskSpec::WorstColumn { column } => goals::worst_column(column),
            TaskSpec::PathOrigin { path_id } => goals::origin_of(*path_id),
            TaskSpec::SlowestStage { path_id } => goals::slowest_stage(*path_id),
            TaskSpec::MaxXtalkNet { path_id } => goals::max_xtalk_net(*path_id),
            TaskSpec::SlewOnNet { path_id, net } => goals::slew_on(net, *path_id),
            TaskSpec::GoesThroughNet { path_id, .. } => goals::data_nets(*path_id),
            TaskSpec::DataArcRising { path_id, .. } => goals::launch_of(*path_id),
            TaskSpec::M7 { selections } => {
                for Selection { path_id, stages } in selections {
                    let (v, src) = self.ss.ask(goals::data_nets_at(*path_id, stages))?;
                    let nets = arr(&v).iter().map(|r| (u(r, "index").unwrap_or(0) as u32, s(r, "net"))).collect();
                    self.facts.selected.push((*path_id, nets, src));
                }
                return Ok(());
            }
            _ => return Err(self.ss.fail(format!("no max retrieval for {}", self.spec.category()))),
        };
        self.facts.single = Some(self.ss.ask(goal)?);
        Ok(())
    }

    fn on_xtalk(&mut self) -> Result<(), AgentError> {
        match self.spec {
            TaskSpec::M3 { .. } | TaskSpec::M9 | TaskSpec::M10 => {
                let id = self.path_id()?;
                let (v, src) = self.ss.ask(goals::victims(id))?;
                for r in arr(&v) {
                    self.facts.victims.push((s(r, "victim"), s(r, "worst_aggressor"), src.clone()));
                }
            }
            TaskSpec::M4 { .. } => {
                let id = self.path_id()?;
                let (v, src) = self.ss.ask(goals::aggressors_on(id))?;
                let pairs = arr(&v).iter().map(|r| (s(r, "victim"), s(r, "net"))).collect();
                self.facts.aggressors = Some((pairs, src));
            }
            TaskSpec::M5 { .. } => {
                let id = self.path_id()?;
                let slow = self.facts.slow.as_ref().ok_or_else(|| self.ss.fail("slowest stages not retrieved"))?;
                let nets: Vec<String> = dedup(slow.0.iter().map(|(_, n, _)| n.clone()));
                let (v, src) = self.ss.ask(goals::aggressors_of(&nets, id))?;
                let pairs = arr(&v).iter().map(|r| (s(r, "victim"), s(r, "net"))).collect();
                self.facts.aggressors = Some((pairs, src));
            }
            TaskSpec::M7 { .. } => {
                if self.facts.selected.is_empty() {
                    return Err(self.ss.fail("selected stages not retrieved"));
                }
                let selected: Vec<(u64, Vec<String>)> =
                    self.facts.selected.iter().map(|(id, n, _)| (*id, n.iter().map(|x| x.1.clone()).collect())).collect();
                for (id, nets) in selected {
                    let (v, src) = self.ss.ask(goals::victims_among(id, &nets))?;
                    for r in arr(&v) {
                        self.facts.victims.push((s(r, "victim"), s(r, "worst_aggressor"), src.clone()));
                    }
                }
            }
            _ => return Err(self.ss.fail(format!("no crosstalk retrieval for {}", self.spec.category()))),
        }
        Ok(())
    }

    fn on_wire(&mut self) -> Result<(), AgentError> {
        let nets: Vec<String> = match self.spec {
            TaskSpec::M2 { .. } | TaskSpec::M10 => {
                let d = self.facts.data_nets.as_ref().ok_or_else(|| self.ss.fail("data stage nets not retrieved"))?;
                d.0.iter().map(|(_, n)| n.clone()).collect()
            }
            TaskSpec::M4 { .. } => {
                let a = self.facts.aggressors.as_ref().ok_or_else(|| self.ss.fail("aggressors not retrieved"))?;
                a.0.iter().flat_map(|(v, g)| [v.clone(), g.clone()]).collect()
            }
            TaskSpec::M5 { .. } => {
                let slow = self.facts.slow.as_ref().ok_or_else(|| self.ss.fail("slowest stages not retrieved"))?;
                slow.0.iter().map(|(_, n, _)| n.clone()).collect()
            }
            TaskSpec::M7 { .. } => self.facts.selected.iter().flat_map(|(_, n, _)| n.iter().map(|x| x.1.clone())).collect(),
            _ => return Err(self.ss.fail(format!("no wire retrieval for {}", self.spec.category()))),
        };
        let (v, src) = self.ss.ask(goals::worst_rc(&dedup(nets)))?;
        for r in arr(&v) {
            if let Some(rc) = f(r, "worst_rc") {
                self.facts.rc.insert(s(r, "net"), (rc, src.clone()));
            }
        }
        Ok(())
    }

    /// Highest-RC net among the slowest stages, first on ties.
    fn m5_net(&self) -> Option<(String, f64)> {
        let slow = self.facts.slow.as_ref()?;
        let mut best: Option<(String, f64)> = None;
        for (_, net, _) in &slow.0 {
            if let Some((rc, _)) = self.facts.rc.get(net) {
                if best.as_ref().is_none_or(|b| *rc > b.1) {
                    best = Some((net.clone(), *rc));
                }
            }
        }
        best
    }

    fn on_lc(&mut self) -> Result<(), AgentError> {
        let goal = match self.spec {
            TaskSpec::M3 { .. } | TaskSpec::M9 | TaskSpec::M10 | TaskSpec::M7 { .. } => {
                let nets = dedup(self.facts.victims.iter().flat_map(|(v, a, _)| [v.clone(), a.clone()]));
                goals::unusual_lc(&nets)
            }
            TaskSpec::M4 { .. } => {
                let flagged = self.m4_pairs().into_iter().flat_map(|(v, a, _, _)| [v, a]);
                goals::constraints_on(&dedup(flagged))
            }
            TaskSpec::M5 { .. } => {
                let (h, _) = self.m5_net().ok_or_else(|| self.ss.fail("no RC values for the slowest stages"))?;
                let aggr = self.facts.aggressors.as_ref().map(|a| a.0.clone()).unwrap_or_default();
                let nets = std::iter::once(h.clone()).chain(aggr.into_iter().filter(|(v, _)| *v == h).map(|(_, g)| g));
                goals::constraints_on(&dedup(nets))
            }
            _ => return Err(self.ss.fail(format!("no constraint retrieval for {}", self.spec.category()))),
        };
        let (v, src) = self.ss.ask(goal)?;
        self.facts.lc = Some((arr(&v).to_vec(), src));
        Ok(())
    }

    fn on_clk(&mut self) -> Result<(), AgentError> {
        let nets = match self.spec {
            TaskSpec::M1 { .. } | TaskSpec::M8 => {
                self.facts.clock_nets.as_ref().ok_or_else(|| self.ss.fail("clock stage nets not retrieved"))?.0.clone()
            }
            _ => return Err(self.ss.fail(format!("no clock retrieval for {}", self.spec.category()))),
        };
        let (v, src) = self.ss.ask(goals::missing_clk(&dedup(nets)))?;
        self.facts.missing = Some((arr(&v).to_vec(), src));
        Ok(())
    }

    fn threshold(&self) -> f64 {
        self.ss.backend.rc_threshold_ps
    }

    /// Victim/aggressor pairs beyond the RC threshold.
    fn m4_pairs(&self) -> Vec<(String, String, f64, Vec<SourceRef>)> {
        let Some((pairs, psrc)) = &self.facts.aggressors else { return vec![] };
        let mut out = Vec::new();
        for (v, a) in pairs {
            if let (Some((rv, sv)), Some((ra, sa))) = (self.facts.rc.get(v), self.facts.rc.get(a)) {
                let m = rv - ra;
                if m.abs() > self.threshold() {
                    out.push((v.clone(), a.clone(), m, vec![psrc.clone(), sv.clone(), sa.clone()]));
                }
            }
        }
        out
    }

    /// Neighbor pairs of consecutive stage indices beyond the RC threshold.
    fn rc_pairs(&self, nets: &[(u32, String)], src: &SourceRef) -> Vec<(String, String, f64, Vec<SourceRef>)> {
        let mut out = Vec::new();
        for w in nets.windows(2) {
            if w[1].0 != w[0].0 + 1 {
                continue;
            }
            if let (Some((ra, sa)), Some((rb, sb))) = (self.facts.rc.get(&w[0].1), self.facts.rc.get(&w[1].1)) {
                let m = ra - rb;
                if m.abs() > self.threshold() {
                    out.push((w[0].1.clone(), w[1].1.clone(), m, vec![src.clone(), sa.clone(), sb.clone()]));
                }
            }
        }
        out
    }

    fn lc_items(&self) -> (Vec<Json>, Vec<Vec<SourceRef>>) {
        let Some((rows, src)) = &self.facts.lc else { return (vec![], vec![]) };
        let mut extra: Vec<SourceRef> = self.facts.victims.iter().map(|x| x.2.clone()).collect();
        extra.dedup();
        let items: Vec<Json> =
            rows.iter().map(|r| json!({"net": s(r, "net"), "constraint_kind": s(r, "constraint_kind"), "value": s(r, "value")})).collect();
        let cites = items.iter().map(|_| std::iter::once(src.clone()).chain(extra.iter().cloned()).collect()).collect();
        (items, cites)
    }

    fn answer(&self) -> Result<(Json, Vec<Citation>), AgentError> {
        let mut cites = Vec::new();
        let cite = |cites: &mut Vec<Citation>, claim: String, sources: Vec<SourceRef>| cites.push(Citation { claim, sources });
        let single = || self.facts.single.as_ref().ok_or_else(|| self.ss.fail("no result retrieved"));
        let value = match self.spec {
            TaskSpec::CheckViolation { .. } => {
                let (v, src) = single()?;
                let slack = arr(v).first().and_then(|r| f(r, "slack")).ok_or_else(|| self.ss.fail("path not in report"))?;
                cite(&mut cites, String::new(), vec![src.clone()]);
                json!(slack < 0.0)
            }
            TaskSpec::WorstAttribute { .. } | TaskSpec::WorstColumn { .. } | TaskSpec::SlowestStage { .. } | TaskSpec::MaxXtalkNet { .. } => {
                let (v, src) = single()?;
                cite(&mut cites, String::new(), vec![src.clone()]);
                v.clone()
            }
            TaskSpec::PathOrigin { .. } | TaskSpec::SlewOnNet { .. } => {
                let (v, src) = single()?;
                let first = arr(v).first().cloned().ok_or_else(|| self.ss.fail("no matching row"))?;
                cite(&mut cites, String::new(), vec![src.clone()]);
                first
            }
            TaskSpec::GoesThroughNet { net, .. } => {
                let (v, src) = single()?;
                if arr(v).is_empty() {
                    return Err(self.ss.fail("path not in report"));
                }
                cite(&mut cites, String::new(), vec![src.clone()]);
                json!(arr(v).iter().any(|r| s(r, "net") == *net))
            }
            TaskSpec::DataArcRising { clock, .. } => {
                let (v, src) = single()?;
                let r = arr(v).first().ok_or_else(|| self.ss.fail("path not in report"))?;
                cite(&mut cites, String::new(), vec![src.clone()]);
                json!(s(r, "clock") == *clock && s(r, "edge") == "rise")
            }
            TaskSpec::M1 { .. } | TaskSpec::M8 => {
                let (rows, src) = self.facts.missing.as_ref().ok_or_else(|| self.ss.fail("clock report not consulted"))?;
                let nets_src = self.facts.clock_nets.as_ref().map(|c| c.1.clone());
                let mut items = Vec::new();
                for (i, r) in rows.iter().enumerate() {
                    let mut missing = Vec::new();
                    if r.get("rise_arrival").is_none_or(Json::is_null) {
                        missing.push("rise");
                    }
                    if r.get("fall_arrival").is_none_or(Json::is_null) {
                        missing.push("fall");
                    }
                    items.push(json!({"clock": s(r, "clock"), "net": s(r, "net"), "missing": missing}));
                    cite(&mut cites, format!("/{i}"), std::iter::once(src.clone()).chain(nets_src.clone()).collect());
                }
                Json::Array(items)
            }
            TaskSpec::M2 { .. } => {
                let (nets, src) = self.facts.data_nets.as_ref().ok_or_else(|| self.ss.fail("data stage nets not retrieved"))?;
                let mut items = Vec::new();
                for (i, (a, b, m, srcs)) in self.rc_pairs(nets, src).into_iter().enumerate() {
                    items.push(json!({"a": a, "b": b, "mismatch": m}));
                    cite(&mut cites, format!("/{i}"), srcs);
                }
                Json::Array(items)
            }
            TaskSpec::M3 { .. } | TaskSpec::M9 => {
                let (items, srcs) = self.lc_items();
                for (i, s) in srcs.into_iter().enumerate() {
                    cite(&mut cites, format!("/{i}"), s);
                }
                Json::Array(items)
            }
            TaskSpec::M4 { .. } => {
                let mut items = Vec::new();
                for (i, (v, a, m, srcs)) in self.m4_pairs().into_iter().enumerate() {
                    items.push(json!({"victim": v, "aggressor": a, "mismatch": m}));
                    cite(&mut cites, format!("/{i}"), srcs);
                }
                Json::Array(items)
            }
            TaskSpec::M5 { .. } => {
                let (h, _) = self.m5_net().ok_or_else(|| self.ss.fail("no RC values for the slowest stages"))?;
                let (lc, lsrc) = self.facts.lc.as_ref().ok_or_else(|| self.ss.fail("constraints not retrieved"))?;
                let mut srcs = vec![lsrc.clone(), self.facts.rc[&h].1.clone()];
                if let Some(s) = &self.facts.slow {
                    srcs.push(s.1.clone());
                }
                let items: Vec<Json> = lc
                    .iter()
                    .map(|r| json!({"net": s(r, "net"), "constraint_kind": s(r, "constraint_kind"), "value": s(r, "value")}))
                    .collect();
                cite(&mut cites, String::new(), srcs);
                json!({"net": h, "constraints": items})
            }
            TaskSpec::M6 { path_id } => {
                let (rows, src) = self.facts.table.as_ref().ok_or_else(|| self.ss.fail("stage table not retrieved"))?;
                cite(&mut cites, String::new(), vec![src.clone()]);
                json!({"path_id": path_id, "stages": rows})
            }
            TaskSpec::M7 { .. } | TaskSpec::M10 => {
                let mut pairs = Vec::new();
                let groups: Vec<(u64, Vec<(u32, String)>, SourceRef)> = match self.spec {
                    TaskSpec::M10 => {
                        let (nets, src) =
                            self.facts.data_nets.as_ref().ok_or_else(|| self.ss.fail("data stage nets not retrieved"))?;
                        vec![(self.path_id()?, nets.clone(), src.clone())]
                    }
                    _ => self.facts.selected.clone(),
                };
                for (id, nets, src) in &groups {
                    for (a, b, m, srcs) in self.rc_pairs(nets, src) {
                        cite(&mut cites, format!("/rc_pairs/{}", pairs.len()), srcs);
                        pairs.push(json!({"path_id": id, "a": a, "b": b, "mismatch": m}));
                    }
                }
                let (items, srcs) = self.lc_items();
                for (i, s) in srcs.into_iter().enumerate() {
                    cite(&mut cites, format!("/unusual_lc/{i}"), s);
                }
                json!({"rc_pairs": pairs, "unusual_lc": items})
            }
            TaskSpec::FreeForm { .. } => unreachable!("free-form tasks bypass flows"),
        };
        Ok((value, cites))
    }
}

/// Scripted traversal: plan with the graph, then run the category's flow.
pub(super) fn traverse_scripted(
    spec: &TaskSpec,
    task_text: &str,
    cm: &CornerMode,
    db: &ReportDb,
    graph: &Tdrg,
    backend: &Backend,
) -> CmTranscript {
    let mut tr = CmTranscript::new(cm.clone());
    let plan = match plan_route(&spec.required_kinds(), task_text, graph) {
        Ok(p) => p,
        Err(e) => {
            tr.error = Some(AgentError::NoValidPlan(e.to_string()).to_string());
            return tr;
        }
    };
    tr.plan = Some(plan.clone());
    let mut ss = Session { cm, db, graph, backend, steps: Vec::new() };

    let outcome = (|| -> Result<(Json, Vec<Citation>), AgentError> {
        if let TaskSpec::FreeForm { kind } = spec {
            ss.steps.push(StepRecord::new(*kind, task_text));
            let (v, src) = ss.ask(task_text.to_string())?;
            return Ok((v, vec![Citation { claim: String::new(), sources: vec![src] }]));
        }
        let mut flow = Flow { spec, ss: &mut ss, facts: Facts2::default() };
        for PlanStep { kind, goal, .. } in &plan.steps {
            flow.ss.steps.push(StepRecord::new(*kind, goal));
            match kind {
                ReportKind::Max => flow.on_max()?,
                ReportKind::XtalkMax => flow.on_xtalk()?,
                ReportKind::Wire => flow.on_wire()?,
                ReportKind::Lc => flow.on_lc()?,
                ReportKind::Clk => flow.on_clk()?,
                // Pass-through steps the planner may route through.
                _ => {}
            }
        }
        flow.answer()
    })();
    for st in &mut ss.steps {
        st.summary = st.queries.iter().map(|q| q.summary.as_str()).collect::<Vec<_>>().join("; ");
    }
    tr.steps = ss.steps;
    match outcome {
        Ok((value, citations)) => {
            tr.summary = format!("{}: {}", cm, compact(&value));
            tr.answer = Some(value);
            tr.citations = citations;
        }
        Err(e) => tr.error = Some(e.to_string()),
    }
    tr
}

pub(super) fn compact(v: &Json) -> String {
    let t = v.to_string();
    if t.chars().count() > 300 {
        format!("{}...", t.chars().take(300).collect::<String>())
    } else {
        t
    }
}

/// Asks the model for a route, validating each proposal against the graph.
pub(super) fn llm_plan(
    task_text: &str,
    required: &BTreeSet<ReportKind>,
    graph: &Tdrg,
    backend: &Backend,
) -> Result<RetrievalPlan, AgentError> {
    let model = backend.model()?;
    let examples = if backend.llm.plan_examples { prompts::PLAN_EXAMPLES } else { "" };
    let prompt = prompts::fill(
        prompts::ROUTE_PLAN,
        &[("graph", &graph.render()), ("examples", examples), ("task", task_text)],
    );
    let mut messages = vec![ChatMessage::user(prompt)];
    let mut last = String::from("no attempt");
    for _ in 0..backend.llm.max_retries.max(1) {
        let reply = model.complete(&messages).map_err(|e| AgentError::Llm(e.to_string()))?;
        let plan = extract_json(&reply).and_then(|v| {
            let steps: Option<Vec<PlanStep>> = arr(&v)
                .iter()
                .enumerate()
                .map(|(i, st)| {
                    let kind = st.get("kind")?.as_str()?.parse().ok()?;
                    let goal = st.get("goal").and_then(Json::as_str).unwrap_or("").to_string();
                    Some(PlanStep { kind, goal, inputs: if i == 0 { vec![] } else { vec![i - 1] } })
                })
                .collect();
            steps.filter(|s| !s.is_empty()).map(|steps| RetrievalPlan { task: task_text.to_string(), steps })
        });
        let diag = match plan {
            Some(p) => {
                let verdict = validate_plan(&p, graph, required);
                if verdict.is_valid() {
                    return Ok(p);
                }
                verdict.to_string()
            }
            None => "reply was not a JSON array of {\"kind\", \"goal\"} steps".to_string(),
        };
        last = diag.clone();
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(prompts::fill(prompts::REPAIR, &[("diagnostic", &diag)])));
    }
    Err(AgentError::NoValidPlan(last))
}

/// Model-driven traversal: model plans, experts write queries, model
/// states the final answer. Any malformed output fails the transcript.
pub(super) fn traverse_llm(
    spec: &TaskSpec,
    task_text: &str,
    cm: &CornerMode,
    db: &ReportDb,
    graph: &Tdrg,
    backend: &Backend,
) -> CmTranscript {
    let mut tr = CmTranscript::new(cm.clone());
    let plan = match llm_plan(task_text, &spec.required_kinds(), graph, backend) {
        Ok(p) => p,
        Err(e) => {
            tr.error = Some(e.to_string());
            return tr;
        }
    };
    tr.plan = Some(plan.clone());
    let mut ss = Session { cm, db, graph, backend, steps: Vec::new() };
    let outcome = (|| -> Result<(Json, String), AgentError> {
        for st in &plan.steps {
            ss.steps.push(StepRecord::new(st.kind, &st.goal));
            let goal = format!("{} (overall task: {task_text})", st.goal);
            ss.ask(goal)?;
        }
        let steps_text = ss.context();
        let prompt = prompts::fill(prompts::FINAL_ANSWER, &[("task", task_text), ("steps", &steps_text)]);
        let model = backend.model()?;
        let reply = model.complete(&[ChatMessage::user(prompt)]).map_err(|e| AgentError::Llm(e.to_string()))?;
        let v = extract_json(&reply).ok_or_else(|| AgentError::Malformed("final answer is not JSON".into()))?;
        let answer = v.get("answer").cloned().ok_or_else(|| AgentError::Malformed("final answer lacks \"answer\"".into()))?;
        let summary = v.get("summary").and_then(Json::as_str).unwrap_or("").to_string();
        Ok((answer, summary))
    })();
    for st in &mut ss.steps {
        st.summary = st.queries.iter().map(|q| q.summary.as_str()).collect::<Vec<_>>().join("; ");
    }
    let sources: Vec<SourceRef> = ss
        .steps
        .iter()
        .enumerate()
        .flat_map(|(i, st)| (0..st.queries.len()).map(move |q| SourceRef { corner_mode: cm.clone(), step: i, query: q }))
        .collect();
    tr.steps = ss.steps;
    match outcome {
        Ok((answer, summary)) => {
            tr.summary = if summary.is_empty() { format!("{}: {}", cm, compact(&answer)) } else { summary };
            tr.citations = vec![Citation { claim: String::new(), sources }];
            tr.answer = Some(answer);
        }
        Err(e) => tr.error = Some(e.to_string()),
    }
    tr
}

pub(super) fn traverse_any(
    spec: &TaskSpec,
    task_text: &str,
    cm: &CornerMode,
    db: &ReportDb,
    graph: &Tdrg,
    backend: &Backend,
) -> CmTranscript {
    match backend.mode {
        Mode::Scripted => traverse_scripted(spec, task_text, cm, db, graph, backend),
        Mode::Llm => traverse_llm(spec, task_text, cm, db, graph, backend),
    }
}
