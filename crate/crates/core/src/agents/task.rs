// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{CornerMode, ReportKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    SingleCornerMode(CornerMode),
    AllModes { corner: String },
    AllCornersModes,
}

/// Which path a multi-report task is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRef {
    /// The path with minimum slack in the max report of each corner/mode.
    WorstSlack,
    Id(u64),
}

impl fmt::Display for PathRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathRef::WorstSlack => f.write_str("the worst-slack path"),
            PathRef::Id(id) => write!(f, "path {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub path_id: u64,
    /// Data stage indices.
    pub stages: Vec<u32>,
}

/// Summary attributes that "worst attribute" tasks may ask about, with the
/// field path and whether worst means smallest.
pub const ATTRIBUTES: [(&str, &str, bool); 5] = [
    ("slack", "summary.slack", true),
    ("arrival", "summary.arrival", false),
    ("constraint", "summary.constraint", true),
    ("pbsa_adjustment", "data_info.pbsa_adjustment", false),
    ("clock_arrival", "clock_info.arrival_time", false),
];

/// Stage table columns for "worst column" tasks; worst is always largest.
pub const COLUMNS: [&str; 4] = ["delay", "slew", "xtalk_delta", "cumulative"];

pub fn attribute(name: &str) -> Option<(&'static str, bool)> {
    ATTRIBUTES.iter().find(|(n, _, _)| *n == name).map(|(_, p, min)| (*p, *min))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "category", rename_all = "snake_case")]
pub enum TaskSpec {
    CheckViolation { path_id: u64 },
    WorstAttribute { attribute: String },
    WorstColumn { column: String },
    PathOrigin { path_id: u64 },
    SlowestStage { path_id: u64 },
    MaxXtalkNet { path_id: u64 },
    SlewOnNet { path_id: u64, net: String },
    GoesThroughNet { path_id: u64, net: String },
    DataArcRising { path_id: u64, clock: String },
    /// Missing rise/fall information on the path's clock network nets.
    M1 { path: PathRef },
    /// Neighboring data nets of the path with RC mismatch above threshold.
    M2 { path: PathRef },
    /// Unusual constraints on the path's victims and worst aggressors.
    M3 { path: PathRef },
    /// Victim/aggressor pairs of the path with RC mismatch above threshold.
    M4 { path: PathRef },
    /// Constraints on the highest-RC net among the three slowest stages,
    /// and on its aggressors.
    M5 { path: PathRef },
    /// Per corner/mode comparison of one path's data stage table.
    M6 { path_id: u64 },
    /// M2 and M3 restricted to selected stages of selected paths.
    M7 { selections: Vec<Selection> },
    M8,
    M9,
    M10,
    /// Arbitrary goal text handed to one expert on one report kind.
    FreeForm { kind: ReportKind },
}

impl TaskSpec {
    pub fn category(&self) -> &'static str {
        match self {
            TaskSpec::CheckViolation { .. } => "check_violation",
            TaskSpec::WorstAttribute { .. } => "worst_attribute",
            TaskSpec::WorstColumn { .. } => "worst_column",
            TaskSpec::PathOrigin { .. } => "path_origin",
            TaskSpec::SlowestStage { .. } => "slowest_stage",
            TaskSpec::MaxXtalkNet { .. } => "max_xtalk_net",
            TaskSpec::SlewOnNet { .. } => "slew_on_net",
            TaskSpec::GoesThroughNet { .. } => "goes_through_net",
            TaskSpec::DataArcRising { .. } => "data_arc_rising",
            TaskSpec::M1 { .. } => "m1",
            TaskSpec::M2 { .. } => "m2",
            TaskSpec::M3 { .. } => "m3",
            TaskSpec::M4 { .. } => "m4",
            TaskSpec::M5 { .. } => "m5",
            TaskSpec::M6 { .. } => "m6",
            TaskSpec::M7 { .. } => "m7",
            TaskSpec::M8 => "m8",
            TaskSpec::M9 => "m9",
            TaskSpec::M10 => "m10",
            TaskSpec::FreeForm { .. } => "free_form",
        }
    }

    pub fn required_kinds(&self) -> BTreeSet<ReportKind> {
        use ReportKind::*;
        let ks: &[ReportKind] = match self {
            TaskSpec::M1 { .. } | TaskSpec::M8 => &[Max, Clk],
            TaskSpec::M2 { .. } => &[Max, Wire],
            TaskSpec::M3 { .. } | TaskSpec::M9 => &[Max, XtalkMax, Lc],
            TaskSpec::M4 { .. } | TaskSpec::M5 { .. } | TaskSpec::M7 { .. } | TaskSpec::M10 => &[Max, Wire, XtalkMax, Lc],
            TaskSpec::FreeForm { kind } => return BTreeSet::from([*kind]),
            _ => &[Max],
        };
        ks.iter().copied().collect()
    }

    /// Base task each corner/mode of a cross-mode task runs.
    pub fn per_mode(&self) -> TaskSpec {
        match self {
            TaskSpec::M8 => TaskSpec::M1 { path: PathRef::WorstSlack },
            TaskSpec::M9 => TaskSpec::M3 { path: PathRef::WorstSlack },
            other => other.clone(),
        }
    }

    /// Canonical task wording.
    pub fn describe(&self) -> String {
        match self {
            TaskSpec::CheckViolation { path_id } => format!("Check path {path_id} for violation"),
            TaskSpec::WorstAttribute { attribute } => format!("Find worst case {attribute} across paths"),
            TaskSpec::WorstColumn { column } => format!("Find worst case stage {column} across paths"),
            TaskSpec::PathOrigin { path_id } => format!("Check if path {path_id} is external or internal"),
            TaskSpec::SlowestStage { path_id } => format!("Which is the slowest stage in the whole path {path_id}"),
            TaskSpec::MaxXtalkNet { path_id } => format!("Net with max crosstalk delta in path {path_id}"),
            TaskSpec::SlewOnNet { path_id, net } => format!("Slew on the net {net} in path {path_id}"),
            TaskSpec::GoesThroughNet { path_id, net } => format!("Does path {path_id} go through net {net}?"),
            TaskSpec::DataArcRising { path_id, clock } => {
                format!("Does the data arc of path {path_id} go through {clock} rising?")
            }
            TaskSpec::M1 { path } => format!("Find missing clk signals that have no rise/fall information on {path}"),
            TaskSpec::M2 { path } => format!("Identify pairs of nets with high RC mismatch on {path}"),
            TaskSpec::M3 { path } => format!("Detect unusual constraints between victim and its aggressors on {path}"),
            TaskSpec::M4 { path } => format!("Identify unusual RC values between victim and its aggressors on {path}"),
            TaskSpec::M5 { path } => format!("Find the constraints of slowest stages with highest RC values on {path}"),
            TaskSpec::M6 { path_id } => {
                format!("Compare each timing table of path {path_id} for number of stages, point values and timing mismatch")
            }
            TaskSpec::M7 { selections } => {
                let s: Vec<String> =
                    selections.iter().map(|s| format!("path {} stages {:?}", s.path_id, s.stages)).collect();
                format!("Identify high RC mismatch pairs and unusual constraints for {}", s.join("; "))
            }
            TaskSpec::M8 => "Find missing clk signals on the worst-slack path across all modes".into(),
            TaskSpec::M9 => "Detect unusual victim/aggressor constraints on the worst-slack path across all modes".into(),
            TaskSpec::M10 => {
                "Identify high RC mismatch pairs and unusual victim/aggressor constraints on the worst-slack path across all modes"
                    .into()
            }
            TaskSpec::FreeForm { kind } => format!("Free-form question on the {kind} report"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub text: String,
    pub scope: Scope,
    pub spec: TaskSpec,
}

impl Task {
    pub fn new(id: impl Into<String>, scope: Scope, spec: TaskSpec) -> Self {
        let text = spec.describe();
        Task { id: id.into(), text, scope, spec }
    }
}
