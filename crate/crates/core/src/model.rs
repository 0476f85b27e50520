// SPDX-License-Identifier: Apache-2.0

//! Domain types for multi-corner multi-mode timing reports.
//!
//! A [`ReportDb`] holds every report loaded for one corner/mode pair, keyed
//! by [`ReportKind`]. A [`Corpus`] maps corner/mode pairs to databases. All
//! times are picoseconds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for identity checks on report times (ps).
pub const TIME_TOLERANCE_PS: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("report kind `{0}` is not loaded")]
    KindAbsent(ReportKind),
    #[error("path {0} not found")]
    PathNotFound(u64),
    #[error("report kind `{0}` has no timing paths")]
    NotAPathReport(ReportKind),
    #[error("invalid corner/mode `{0}`")]
    InvalidCornerMode(String),
    #[error("unknown report kind `{0}`")]
    UnknownKind(String),
}

/// A corner/mode pair. Renders as `<CORNER>_<mode>`; the corner never
/// contains an underscore so the rendering parses back unambiguously.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CornerMode {
    corner: String,
    mode: String,
}

impl CornerMode {
    pub fn new(corner: impl Into<String>, mode: impl Into<String>) -> Result<Self, ModelError> {
        let corner = corner.into();
        let mode = mode.into();
        let ok = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !ok(&corner) || !ok(&mode) || corner.contains('_') {
            return Err(ModelError::InvalidCornerMode(format!("{corner}_{mode}")));
        }
        Ok(Self { corner, mode })
    }

    pub fn corner(&self) -> &str {
        &self.corner
    }

    pub fn mode(&self) -> &str {
        &self.mode
    }
}

impl fmt::Display for CornerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.corner, self.mode)
    }
}

impl FromStr for CornerMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (corner, mode) = s
            .split_once('_')
            .ok_or_else(|| ModelError::InvalidCornerMode(s.to_string()))?;
        Self::new(corner, mode)
    }
}

impl Serialize for CornerMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CornerMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The closed set of report kinds produced per corner/mode. Declaration
/// order is the canonical order used for deterministic tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Max,
    Min,
    XtalkMax,
    XtalkMin,
    Clk,
    Freq,
    Lc,
    Wire,
}

impl ReportKind {
    pub const ALL: [ReportKind; 8] = [
        ReportKind::Max,
        ReportKind::Min,
        ReportKind::XtalkMax,
        ReportKind::XtalkMin,
        ReportKind::Clk,
        ReportKind::Freq,
        ReportKind::Lc,
        ReportKind::Wire,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::Max => "max",
            ReportKind::Min => "min",
            ReportKind::XtalkMax => "xtalk_max",
            ReportKind::XtalkMin => "xtalk_min",
            ReportKind::Clk => "clk",
            ReportKind::Freq => "freq",
            ReportKind::Lc => "lc",
            ReportKind::Wire => "wire",
        }
    }

    pub fn is_path_report(self) -> bool {
        matches!(self, ReportKind::Max | ReportKind::Min)
    }

    pub fn is_xtalk(self) -> bool {
        matches!(self, ReportKind::XtalkMax | ReportKind::XtalkMin)
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathOrigin {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path_id: u64,
    pub startpoint: String,
    pub endpoint: String,
    pub slack: f64,
    pub constraint: f64,
    pub arrival: f64,
    pub path_group: String,
    pub internal_external: PathOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcRole {
    Data,
    Clock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockEdge {
    Rise,
    Fall,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Rise,
    Fall,
}

/// Arc-level information of a path (`DataInfo` / `ClockInfo`). The PBSA
/// adjustment is stored as reported, without interpretation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcInfo {
    pub role: ArcRole,
    pub pbsa_adjustment: f64,
    pub arrival_time: f64,
    pub launch_clock: String,
    pub capture_clock: String,
    pub clock_edge: ClockEdge,
}

/// One row of a data or clock timing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub index: u32,
    pub point: String,
    pub net: String,
    pub cell: String,
    pub edge: Edge,
    pub delay: f64,
    pub slew: f64,
    pub xtalk_delta: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingPath {
    pub summary: PathSummary,
    pub data_info: ArcInfo,
    pub clock_info: ArcInfo,
    pub data_stages: Vec<Stage>,
    pub clock_stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggressor {
    pub net: String,
    pub coupling_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XtalkEntry {
    pub path_id: u64,
    pub victim: String,
    pub aggressors: Vec<Aggressor>,
    pub worst_aggressor: String,
}

impl XtalkEntry {
    /// Builds an entry whose worst aggressor is the first one with the
    /// largest coupling delta. Returns `None` when `aggressors` is empty.
    pub fn new(path_id: u64, victim: String, aggressors: Vec<Aggressor>) -> Option<Self> {
        let worst = worst_aggressor(&aggressors)?.net.clone();
        Some(Self { path_id, victim, aggressors, worst_aggressor: worst })
    }
}

pub(crate) fn worst_aggressor(aggressors: &[Aggressor]) -> Option<&Aggressor> {
    aggressors
        .iter()
        .fold(None, |best: Option<&Aggressor>, a| match best {
            Some(b) if b.coupling_delta >= a.coupling_delta => Some(b),
            _ => Some(a),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireNet {
    pub net: String,
    /// ohm
    pub worst_r: f64,
    /// fF
    pub worst_c: f64,
    /// ps
    pub worst_rc: f64,
}

/// A logic constraint on a net. `unusual` is ground-truth metadata; report
/// text never carries it, so parsed entries always hold `false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcEntry {
    pub net: String,
    pub constraint_kind: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unusual: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClkReportEntry {
    pub clock: String,
    pub net: String,
    pub rise_arrival: Option<f64>,
    pub fall_arrival: Option<f64>,
}

impl ClkReportEntry {
    /// True when the entry lacks rise or fall information.
    pub fn is_incomplete(&self) -> bool {
        self.rise_arrival.is_none() || self.fall_arrival.is_none()
    }
}

/// Payload of one report, typed by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "snake_case")]
pub enum Payload {
    Max(Vec<TimingPath>),
    Min(Vec<TimingPath>),
    XtalkMax(Vec<XtalkEntry>),
    XtalkMin(Vec<XtalkEntry>),
    Clk(Vec<ClkReportEntry>),
    Freq(BTreeMap<String, f64>),
    Lc(Vec<LcEntry>),
    Wire(Vec<WireNet>),
}

impl Payload {
    pub fn kind(&self) -> ReportKind {
        match self {
            Payload::Max(_) => ReportKind::Max,
            Payload::Min(_) => ReportKind::Min,
            Payload::XtalkMax(_) => ReportKind::XtalkMax,
            Payload::XtalkMin(_) => ReportKind::XtalkMin,
            Payload::Clk(_) => ReportKind::Clk,
            Payload::Freq(_) => ReportKind::Freq,
            Payload::Lc(_) => ReportKind::Lc,
            Payload::Wire(_) => ReportKind::Wire,
        }
    }

    /// An empty payload of the given kind.
    pub fn empty(kind: ReportKind) -> Self {
        match kind {
            ReportKind::Max => Payload::Max(Vec::new()),
            ReportKind::Min => Payload::Min(Vec::new()),
            ReportKind::XtalkMax => Payload::XtalkMax(Vec::new()),
            ReportKind::XtalkMin => Payload::XtalkMin(Vec::new()),
            ReportKind::Clk => Payload::Clk(Vec::new()),
            ReportKind::Freq => Payload::Freq(BTreeMap::new()),
            ReportKind::Lc => Payload::Lc(Vec::new()),
            ReportKind::Wire => Payload::Wire(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::Max(v) | Payload::Min(v) => v.len(),
            Payload::XtalkMax(v) | Payload::XtalkMin(v) => v.len(),
            Payload::Clk(v) => v.len(),
            Payload::Freq(m) => m.len(),
            Payload::Lc(v) => v.len(),
            Payload::Wire(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn paths(&self) -> Option<&[TimingPath]> {
        match self {
            Payload::Max(v) | Payload::Min(v) => Some(v),
            _ => None,
        }
    }

    pub fn xtalk(&self) -> Option<&[XtalkEntry]> {
        match self {
            Payload::XtalkMax(v) | Payload::XtalkMin(v) => Some(v),
            _ => None,
        }
    }
}

/// Every report loaded for one corner/mode pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDb {
    pub corner_mode: CornerMode,
    tables: BTreeMap<ReportKind, Payload>,
}

impl ReportDb {
    pub fn new(corner_mode: CornerMode) -> Self {
        Self { corner_mode, tables: BTreeMap::new() }
    }

    /// Inserts a payload, returning the previous payload of the same kind.
    pub fn insert(&mut self, payload: Payload) -> Option<Payload> {
        self.tables.insert(payload.kind(), payload)
    }

    pub fn lookup(&self, kind: ReportKind) -> Result<&Payload, ModelError> {
        self.tables.get(&kind).ok_or(ModelError::KindAbsent(kind))
    }

    pub fn has(&self, kind: ReportKind) -> bool {
        self.tables.contains_key(&kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = ReportKind> + '_ {
        self.tables.keys().copied()
    }

    pub fn payloads(&self) -> impl Iterator<Item = &Payload> {
        self.tables.values()
    }

    pub fn paths(&self, kind: ReportKind) -> Result<&[TimingPath], ModelError> {
        self.lookup(kind)?.paths().ok_or(ModelError::NotAPathReport(kind))
    }

    pub fn path_by_id(&self, kind: ReportKind, id: u64) -> Result<&TimingPath, ModelError> {
        if !kind.is_path_report() {
            return Err(ModelError::NotAPathReport(kind));
        }
        self.paths(kind)?
            .iter()
            .find(|p| p.summary.path_id == id)
            .ok_or(ModelError::PathNotFound(id))
    }

    /// Checks every domain invariant; an empty list means the database is clean.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for payload in self.tables.values() {
            validate_payload(payload, &mut out);
        }
        out
    }
}

/// Provenance of a corpus: either the generator seed or the source paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    /// Generator settings, when the corpus was synthesized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
    /// Row count per corner/mode and loaded kind.
    pub row_counts: BTreeMap<String, BTreeMap<ReportKind, usize>>,
    /// Kinds absent per corner/mode.
    #[serde(default)]
    pub missing_kinds: BTreeMap<String, Vec<ReportKind>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub databases: BTreeMap<CornerMode, ReportDb>,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn new(databases: BTreeMap<CornerMode, ReportDb>, mut manifest: Manifest) -> Self {
        manifest.row_counts.clear();
        manifest.missing_kinds.clear();
        for (cm, db) in &databases {
            let counts = db.payloads().map(|p| (p.kind(), p.len())).collect();
            manifest.row_counts.insert(cm.to_string(), counts);
            let missing: Vec<_> = ReportKind::ALL.into_iter().filter(|k| !db.has(*k)).collect();
            if !missing.is_empty() {
                manifest.missing_kinds.insert(cm.to_string(), missing);
            }
        }
        Self { databases, manifest }
    }

    pub fn get(&self, cm: &CornerMode) -> Option<&ReportDb> {
        self.databases.get(cm)
    }

    pub fn corner_modes(&self) -> impl Iterator<Item = &CornerMode> {
        self.databases.keys()
    }

    pub fn validate(&self) -> Vec<Violation> {
        self.databases.values().flat_map(|db| db.validate()).collect()
    }
}

/// A broken invariant, naming the offending object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ReportKind,
    /// Path id, net, or clock name the violation concerns.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.kind, self.subject, self.message)
    }
}

fn validate_payload(payload: &Payload, out: &mut Vec<Violation>) {
    let kind = payload.kind();
    let mut push = |subject: String, message: String| out.push(Violation { kind, subject, message });
    match payload {
        Payload::Max(paths) | Payload::Min(paths) => {
            let mut seen = std::collections::HashSet::new();
            for p in paths {
                let s = &p.summary;
                let subject = format!("path {}", s.path_id);
                if !seen.insert(s.path_id) {
                    push(subject.clone(), "duplicate path_id".into());
                }
                if (s.slack - (s.constraint - s.arrival)).abs() > TIME_TOLERANCE_PS {
                    push(
                        subject.clone(),
                        format!("slack {} != constraint {} - arrival {}", s.slack, s.constraint, s.arrival),
                    );
                }
                if p.data_info.role != ArcRole::Data {
                    push(subject.clone(), "data_info role is not data".into());
                }
                if p.clock_info.role != ArcRole::Clock {
                    push(subject.clone(), "clock_info role is not clock".into());
                }
                for (table, stages) in [("data", &p.data_stages), ("clock", &p.clock_stages)] {
                    check_stages(&subject, table, stages, &mut push);
                }
                if let Some(last) = p.data_stages.last() {
                    if (last.cumulative - s.arrival).abs() > TIME_TOLERANCE_PS {
                        push(
                            subject.clone(),
                            format!("last data stage cumulative {} != arrival {}", last.cumulative, s.arrival),
                        );
                    }
                }
            }
        }
        Payload::XtalkMax(entries) | Payload::XtalkMin(entries) => {
            for e in entries {
                let subject = format!("victim {} (path {})", e.victim, e.path_id);
                match worst_aggressor(&e.aggressors) {
                    None => push(subject, "no aggressors".into()),
                    Some(w) if w.net != e.worst_aggressor => push(
                        subject,
                        format!("worst_aggressor {} is not the max-delta aggressor {}", e.worst_aggressor, w.net),
                    ),
                    Some(_) => {}
                }
            }
        }
        Payload::Wire(nets) => {
            for n in nets {
                if n.worst_r < 0.0 || n.worst_c < 0.0 || n.worst_rc < 0.0 {
                    push(format!("net {}", n.net), "negative RC value".into());
                }
            }
        }
        Payload::Lc(entries) => {
            for e in entries {
                if e.net.is_empty() {
                    push("lc entry".into(), "empty net".into());
                }
            }
        }
        Payload::Clk(_) => {}
        Payload::Freq(map) => {
            for (clock, mhz) in map {
                if !(*mhz > 0.0) {
                    push(format!("clock {clock}"), format!("non-positive frequency {mhz}"));
                }
            }
        }
    }
}

fn check_stages(subject: &str, table: &str, stages: &[Stage], push: &mut impl FnMut(String, String)) {
    let mut prev: Option<f64> = None;
    for (i, st) in stages.iter().enumerate() {
        if st.index as usize != i {
            push(subject.to_string(), format!("{table} stage {i} has index {}", st.index));
        }
        if st.delay < 0.0 {
            push(subject.to_string(), format!("{table} stage {i} has negative delay"));
        }
        if !(st.slew > 0.0) {
            push(subject.to_string(), format!("{table} stage {i} has non-positive slew"));
        }
        if let Some(p) = prev {
            if st.cumulative < p {
                push(subject.to_string(), format!("{table} stage {i} cumulative decreases"));
            }
        }
        prev = Some(st.cumulative);
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn stage(index: u32, net: &str, delay: f64, cumulative: f64) -> Stage {
        Stage {
            index,
            point: format!("{net}/Z"),
            net: net.into(),
            cell: "INVX1".into(),
            edge: Edge::Rise,
            delay,
            slew: 5.0,
            xtalk_delta: 0.0,
            cumulative,
        }
    }

    pub(crate) fn path(id: u64) -> TimingPath {
        let info = |role| ArcInfo {
            role,
            pbsa_adjustment: 0.5,
            arrival_time: 30.0,
            launch_clock: "CLK_A".into(),
            capture_clock: "CLK_A".into(),
            clock_edge: ClockEdge::Rise,
        };
        TimingPath {
            summary: PathSummary {
                path_id: id,
                startpoint: "u_top/a".into(),
                endpoint: "u_top/b".into(),
                slack: 70.0,
                constraint: 100.0,
                arrival: 30.0,
                path_group: "CLK_A".into(),
                internal_external: PathOrigin::Internal,
            },
            data_info: info(ArcRole::Data),
            clock_info: info(ArcRole::Clock),
            data_stages: vec![stage(0, "n0", 10.0, 10.0), stage(1, "n1", 5.0, 15.0), stage(2, "n2", 5.0, 20.0), stage(3, "n3", 10.0, 30.0)],
            clock_stages: vec![stage(0, "clk0", 3.0, 3.0)],
        }
    }

    fn db_with(paths: Vec<TimingPath>) -> ReportDb {
        let mut db = ReportDb::new("TT_read".parse().unwrap());
        db.insert(Payload::Max(paths));
        db
    }

    #[test]
    fn corner_mode_renders_and_parses() {
        let cm: CornerMode = "SS_scan".parse().unwrap();
        assert_eq!(cm.corner(), "SS");
        assert_eq!(cm.mode(), "scan");
        assert_eq!(cm.to_string(), "SS_scan");
        assert!("TT".parse::<CornerMode>().is_err());
        assert!(CornerMode::new("", "read").is_err());
        assert!(CornerMode::new("T_T", "read").is_err());
    }

    #[test]
    fn report_kind_is_closed() {
        for k in ReportKind::ALL {
            assert_eq!(k.as_str().parse::<ReportKind>().unwrap(), k);
        }
        assert!("timing".parse::<ReportKind>().is_err());
    }

    #[test]
    fn lookup_returns_payload_or_kind_absent() {
        let db = db_with(vec![path(1), path(2)]);
        let got = db.paths(ReportKind::Max).unwrap();
        assert_eq!(got.iter().map(|p| p.summary.path_id).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(db.lookup(ReportKind::Wire), Err(ModelError::KindAbsent(ReportKind::Wire)));
        assert_eq!(db.lookup(ReportKind::Max).unwrap(), db.lookup(ReportKind::Max).unwrap());
    }

    #[test]
    fn path_by_id_finds_unique_path() {
        let db = db_with(vec![path(1), path(282613)]);
        assert_eq!(db.path_by_id(ReportKind::Max, 282613).unwrap().summary.path_id, 282613);
        assert_eq!(db.path_by_id(ReportKind::Max, 5), Err(ModelError::PathNotFound(5)));
        assert_eq!(db.path_by_id(ReportKind::Min, 1), Err(ModelError::KindAbsent(ReportKind::Min)));
        assert_eq!(db.path_by_id(ReportKind::Wire, 1), Err(ModelError::NotAPathReport(ReportKind::Wire)));
    }

    #[test]
    fn validate_clean_path() {
        assert!(db_with(vec![path(1)]).validate().is_empty());
    }

    #[test]
    fn validate_flags_decreasing_cumulative() {
        let mut p = path(1);
        p.data_stages[3].cumulative = 12.0;
        p.summary.arrival = 12.0;
        p.summary.slack = 88.0;
        let v = db_with(vec![p]).validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].message.contains("stage 3"));
        assert_eq!(v[0].subject, "path 1");
    }

    #[test]
    fn validate_flags_slack_mismatch() {
        let mut p = path(1);
        p.summary.slack = 69.9;
        let v = db_with(vec![p]).validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("slack"));
        let mut p = path(1);
        p.summary.slack = 70.005;
        assert!(db_with(vec![p]).validate().is_empty());
    }

    #[test]
    fn validate_flags_bad_worst_aggressor() {
        let mut db = ReportDb::new("TT_read".parse().unwrap());
        let aggr = vec![
            Aggressor { net: "a".into(), coupling_delta: 1.0 },
            Aggressor { net: "b".into(), coupling_delta: 3.0 },
        ];
        let mut e = XtalkEntry::new(7, "v".into(), aggr).unwrap();
        assert_eq!(e.worst_aggressor, "b");
        e.worst_aggressor = "a".into();
        db.insert(Payload::XtalkMax(vec![e]));
        assert_eq!(db.validate().len(), 1);
        assert!(XtalkEntry::new(7, "v".into(), vec![]).is_none());
    }

    #[test]
    fn worst_aggressor_ties_break_to_first() {
        let aggr = vec![
            Aggressor { net: "a".into(), coupling_delta: 3.0 },
            Aggressor { net: "b".into(), coupling_delta: 3.0 },
        ];
        assert_eq!(worst_aggressor(&aggr).unwrap().net, "a");
    }

    #[test]
    fn clk_entry_incomplete() {
        let e = ClkReportEntry { clock: "C".into(), net: "n".into(), rise_arrival: Some(1.0), fall_arrival: None };
        assert!(e.is_incomplete());
    }
}
