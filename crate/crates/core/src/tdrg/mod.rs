// SPDX-License-Identifier: Apache-2.0

//! Timing debug relation graph: report kinds as nodes, debug relations as
//! directed edges, and route planning over them.
//!
//! The shipped graph text lives in `assets/tdrg_defaults.toml`. A
//! [`Profile`] selects how much of it is visible: an edge whose detail is
//! [`Detail::None`] is absent from the graph entirely, a node with
//! [`Detail::None`] stays but carries an empty description.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ReportKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detail {
    None,
    Limited,
    Detailed,
}

/// Description visibility settings used by the sensitivity study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Set1,
    Set2,
    Set3,
    Set4,
    Set5,
    Set6,
    Proposed,
}

impl Profile {
    pub const ALL: [Profile; 7] =
        [Profile::Set1, Profile::Set2, Profile::Set3, Profile::Set4, Profile::Set5, Profile::Set6, Profile::Proposed];

    pub fn node_detail(self) -> Detail {
        match self {
            Profile::Set1 | Profile::Set3 => Detail::None,
            Profile::Set2 | Profile::Set4 | Profile::Set6 => Detail::Limited,
            Profile::Set5 | Profile::Proposed => Detail::Detailed,
        }
    }

    pub fn edge_detail(self) -> Detail {
        match self {
            Profile::Set1 | Profile::Set2 => Detail::None,
            Profile::Set3 | Profile::Set4 | Profile::Set5 => Detail::Limited,
            Profile::Set6 | Profile::Proposed => Detail::Detailed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Set1 => "set1",
            Profile::Set2 => "set2",
            Profile::Set3 => "set3",
            Profile::Set4 => "set4",
            Profile::Set5 => "set5",
            Profile::Set6 => "set6",
            Profile::Proposed => "proposed",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Profile::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown profile '{s}' (expected set1..set6 or proposed)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdrgNode {
    pub kind: ReportKind,
    pub description: String,
    pub detail: Detail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdrgEdge {
    pub from: ReportKind,
    pub to: ReportKind,
    pub relation: String,
    pub detail: Detail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tdrg {
    pub profile: Profile,
    pub nodes: Vec<TdrgNode>,
    pub edges: Vec<TdrgEdge>,
}

#[derive(Debug, Deserialize)]
struct DefaultText {
    limited: String,
    detailed: String,
}

#[derive(Debug, Deserialize)]
struct DefaultNode {
    kind: ReportKind,
    #[serde(flatten)]
    text: DefaultText,
}

#[derive(Debug, Deserialize)]
struct DefaultEdge {
    from: ReportKind,
    to: ReportKind,
    #[serde(flatten)]
    text: DefaultText,
}

#[derive(Debug, Deserialize)]
struct Defaults {
    node: Vec<DefaultNode>,
    edge: Vec<DefaultEdge>,
}

const DEFAULTS_TOML: &str = include_str!("../../assets/tdrg_defaults.toml");

fn defaults() -> &'static Defaults {
    static CELL: OnceLock<Defaults> = OnceLock::new();
    CELL.get_or_init(|| toml::from_str(DEFAULTS_TOML).expect("shipped graph defaults parse"))
}

fn pick(text: &DefaultText, detail: Detail) -> String {
    match detail {
        Detail::None => String::new(),
        Detail::Limited => text.limited.clone(),
        Detail::Detailed => text.detailed.clone(),
    }
}

/// The shipped graph with descriptions at the profile's detail levels.
pub fn default_graph(profile: Profile) -> Tdrg {
    let d = defaults();
    let nd = profile.node_detail();
    let ed = profile.edge_detail();
    let mut nodes: Vec<TdrgNode> =
        d.node.iter().map(|n| TdrgNode { kind: n.kind, description: pick(&n.text, nd), detail: nd }).collect();
    nodes.sort_by_key(|n| n.kind);
    let mut edges: Vec<TdrgEdge> = if ed == Detail::None {
        Vec::new()
    } else {
        d.edge.iter().map(|e| TdrgEdge { from: e.from, to: e.to, relation: pick(&e.text, ed), detail: ed }).collect()
    };
    edges.sort_by_key(|e| (e.from, e.to));
    Tdrg { profile, nodes, edges }
}

impl Tdrg {
    pub fn node(&self, kind: ReportKind) -> Option<&TdrgNode> {
        self.nodes.iter().find(|n| n.kind == kind)
    }

    pub fn edge(&self, from: ReportKind, to: ReportKind) -> Option<&TdrgEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Successors in enum order.
    pub fn successors(&self, from: ReportKind) -> impl Iterator<Item = ReportKind> + '_ {
        let mut out: Vec<ReportKind> = self.edges.iter().filter(|e| e.from == from).map(|e| e.to).collect();
        out.sort();
        out.into_iter()
    }

    fn described(&self, kind: ReportKind) -> bool {
        self.node(kind).is_some_and(|n| !n.description.is_empty())
    }

    /// Structural problems: self-loops, duplicate edges, edges to unknown
    /// nodes, duplicate nodes.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut seen_nodes = BTreeSet::new();
        for n in &self.nodes {
            if !seen_nodes.insert(n.kind) {
                problems.push(format!("duplicate node {}", n.kind));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.from == e.to {
                problems.push(format!("self-loop on {}", e.from));
            }
            if !seen.insert((e.from, e.to)) {
                problems.push(format!("duplicate edge {} -> {}", e.from, e.to));
            }
            for k in [e.from, e.to] {
                if !seen_nodes.contains(&k) {
                    problems.push(format!("edge endpoint {k} is not a node"));
                }
            }
        }
        problems
    }

    /// Compact text rendering for prompts and `tdrg show`.
    pub fn render(&self) -> String {
        let mut out = String::from("Reports:\n");
        for n in &self.nodes {
            if n.description.is_empty() {
                out.push_str(&format!("- {}\n", n.kind));
            } else {
                out.push_str(&format!("- {}: {}\n", n.kind, n.description));
            }
        }
        if self.edges.is_empty() {
            out.push_str("Relations: none\n");
        } else {
            out.push_str("Relations:\n");
            for e in &self.edges {
                out.push_str(&format!("- {} -> {}: {}\n", e.from, e.to, e.relation));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub kind: ReportKind,
    pub goal: String,
    /// Indices of earlier steps whose outputs this step consumes.
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalPlan {
    pub task: String,
    pub steps: Vec<PlanStep>,
}

impl RetrievalPlan {
    pub fn kinds(&self) -> Vec<ReportKind> {
        self.steps.iter().map(|s| s.kind).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PlanVerdict {
    Valid,
    Invalid {
        missing_edges: Vec<(ReportKind, ReportKind)>,
        missing_kinds: Vec<ReportKind>,
        /// Kinds the graph says nothing about: no description and not
        /// reached through an edge.
        ungrounded: Vec<ReportKind>,
    },
}

impl PlanVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, PlanVerdict::Valid)
    }
}

impl fmt::Display for PlanVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanVerdict::Valid => f.write_str("valid"),
            PlanVerdict::Invalid { missing_edges, missing_kinds, ungrounded } => {
                let mut parts = Vec::new();
                if !missing_edges.is_empty() {
                    let e: Vec<String> = missing_edges.iter().map(|(a, b)| format!("{a} -> {b}")).collect();
                    parts.push(format!("no edge {}", e.join(", ")));
                }
                if !missing_kinds.is_empty() {
                    let k: Vec<&str> = missing_kinds.iter().map(|k| k.as_str()).collect();
                    parts.push(format!("missing kind {}", k.join(", ")));
                }
                if !ungrounded.is_empty() {
                    let k: Vec<&str> = ungrounded.iter().map(|k| k.as_str()).collect();
                    parts.push(format!("no graph information on {}", k.join(", ")));
                }
                if parts.is_empty() {
                    parts.push("empty plan".into());
                }
                write!(f, "invalid plan: {}", parts.join("; "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TdrgError {
    #[error("no valid plan connects {}", kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "))]
    NoValidPlan { kinds: Vec<ReportKind> },
}

/// A plan is valid when every consecutive pair is an edge, every required
/// kind appears, and every step kind is grounded in the graph.
pub fn validate_plan(plan: &RetrievalPlan, graph: &Tdrg, required: &BTreeSet<ReportKind>) -> PlanVerdict {
    let kinds = plan.kinds();
    let mut missing_edges = Vec::new();
    let mut touched = BTreeSet::new();
    for w in kinds.windows(2) {
        if graph.edge(w[0], w[1]).is_some() {
            touched.insert(w[0]);
            touched.insert(w[1]);
        } else {
            missing_edges.push((w[0], w[1]));
        }
    }
    let present: BTreeSet<ReportKind> = kinds.iter().copied().collect();
    let missing_kinds: Vec<ReportKind> = required.difference(&present).copied().collect();
    let ungrounded: Vec<ReportKind> =
        present.iter().copied().filter(|k| !touched.contains(k) && !graph.described(*k)).collect();
    if kinds.is_empty() || !missing_edges.is_empty() || !missing_kinds.is_empty() || !ungrounded.is_empty() {
        PlanVerdict::Invalid { missing_edges, missing_kinds, ungrounded }
    } else {
        PlanVerdict::Valid
    }
}

/// Shortest valid walk covering `required`, starting from `max` when it is
/// required and otherwise from the required kinds in enum order. Among
/// equally short walks the lexicographically smallest in enum order wins.
pub fn plan_route(required: &BTreeSet<ReportKind>, task: &str, graph: &Tdrg) -> Result<RetrievalPlan, TdrgError> {
    let no_plan = || TdrgError::NoValidPlan { kinds: required.iter().copied().collect() };
    if required.is_empty() {
        return Err(no_plan());
    }
    let bit: HashMap<ReportKind, u32> = required.iter().enumerate().map(|(i, k)| (*k, 1 << i)).collect();
    let full = (1u32 << required.len()) - 1;
    let mask_of = |k: ReportKind| bit.get(&k).copied().unwrap_or(0);
    let starts: Vec<ReportKind> = if required.contains(&ReportKind::Max) {
        vec![ReportKind::Max]
    } else {
        required.iter().copied().collect()
    };

    // Level-order BFS with neighbors expanded in enum order keeps the queue
    // sorted lexicographically within each level, so the first goal state
    // dequeued is the smallest shortest walk.
    let mut parent: HashMap<(ReportKind, u32), Option<(ReportKind, u32)>> = HashMap::new();
    let mut queue = VecDeque::new();
    for s in starts {
        let st = (s, mask_of(s));
        if parent.insert(st, None).is_none() {
            queue.push_back((st, 1usize));
        }
    }
    while let Some((st, len)) = queue.pop_front() {
        let (node, mask) = st;
        if mask == full && (len >= 2 || graph.described(node)) {
            let mut walk = vec![node];
            let mut cur = st;
            while let Some(Some(p)) = parent.get(&cur) {
                walk.push(p.0);
                cur = *p;
            }
            walk.reverse();
            let plan = build_plan(task, &walk, graph);
            debug_assert!(validate_plan(&plan, graph, required).is_valid());
            return Ok(plan);
        }
        for next in graph.successors(node) {
            let ns = (next, mask | mask_of(next));
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(ns) {
                e.insert(Some(st));
                queue.push_back((ns, len + 1));
            }
        }
    }
    Err(no_plan())
}

fn build_plan(task: &str, walk: &[ReportKind], graph: &Tdrg) -> RetrievalPlan {
    let steps = walk
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            if i == 0 {
                PlanStep { kind, goal: format!("retrieve from {kind} for: {task}"), inputs: vec![] }
            } else {
                let relation = graph.edge(walk[i - 1], kind).map(|e| e.relation.clone()).unwrap_or_default();
                PlanStep { kind, goal: relation, inputs: vec![i - 1] }
            }
        })
        .collect();
    RetrievalPlan { task: task.to_string(), steps }
}

#[cfg(test)]
mod tests;
