// SPDX-License-Identifier: Apache-2.0

//! Static row types. Field names match the JSON names of the model types,
//! and field order here defines the accessor indices used by the executor.

use std::fmt;
use std::sync::Arc;

use crate::model::ReportKind;

#[derive(Debug, Clone, PartialEq)]
pub enum Ty {
    Bool,
    Int,
    Num,
    Str,
    List(Box<Ty>),
    Record(Rec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rec(pub Arc<Vec<(String, Ty)>>);

impl Rec {
    pub fn new(fields: Vec<(String, Ty)>) -> Self {
        Rec(Arc::new(fields))
    }

    fn from_static(fields: &[(&str, Ty)]) -> Self {
        Rec::new(fields.iter().map(|(n, t)| (n.to_string(), t.clone())).collect())
    }

    pub fn fields(&self) -> &[(String, Ty)] {
        &self.0
    }

    pub fn lookup(&self, name: &str) -> Option<(usize, &Ty)> {
        self.0.iter().enumerate().find(|(_, (n, _))| n == name).map(|(i, (_, t))| (i, t))
    }
}

impl Ty {
    pub fn is_numeric(&self) -> bool {
        matches!(self, Ty::Int | Ty::Num)
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Ty::Bool | Ty::Int | Ty::Num | Ty::Str)
    }

    /// Orderable by sort_by / min_by / max_by.
    pub fn is_orderable(&self) -> bool {
        matches!(self, Ty::Int | Ty::Num | Ty::Str)
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Bool => f.write_str("bool"),
            Ty::Int => f.write_str("int"),
            Ty::Num => f.write_str("num"),
            Ty::Str => f.write_str("str"),
            Ty::List(t) => write!(f, "list<{t}>"),
            Ty::Record(r) => {
                f.write_str("{")?;
                for (i, (n, _)) in r.fields().iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(n)?;
                }
                f.write_str("}")
            }
        }
    }
}

pub const SUMMARY: [&str; 8] =
    ["path_id", "startpoint", "endpoint", "slack", "constraint", "arrival", "path_group", "internal_external"];
pub const INFO: [&str; 6] = ["role", "pbsa_adjustment", "arrival_time", "launch_clock", "capture_clock", "clock_edge"];
pub const STAGE: [&str; 9] = ["index", "point", "net", "cell", "edge", "delay", "slew", "xtalk_delta", "cumulative"];
pub const PATH: [&str; 5] = ["summary", "data_info", "clock_info", "data_stages", "clock_stages"];
pub const XTALK: [&str; 4] = ["path_id", "victim", "aggressors", "worst_aggressor"];
pub const FLAT_STAGE: [&str; 10] =
    ["index", "point", "net", "cell", "edge", "delay", "slew", "xtalk_delta", "cumulative", "path_id"];
pub const AGGRESSOR: [&str; 2] = ["net", "coupling_delta"];
pub const FLAT_AGGRESSOR: [&str; 4] = ["net", "coupling_delta", "path_id", "victim"];
pub const WIRE: [&str; 4] = ["net", "worst_r", "worst_c", "worst_rc"];
pub const LC: [&str; 3] = ["net", "constraint_kind", "value"];
pub const CLK: [&str; 4] = ["clock", "net", "rise_arrival", "fall_arrival"];
pub const FREQ: [&str; 2] = ["clock", "mhz"];

fn zip(names: &[&str], tys: &[Ty]) -> Rec {
    let pairs: Vec<(&str, Ty)> = names.iter().copied().zip(tys.iter().cloned()).collect();
    Rec::from_static(&pairs)
}

pub fn summary() -> Rec {
    use Ty::*;
    zip(&SUMMARY, &[Int, Str, Str, Num, Num, Num, Str, Str])
}

pub fn info() -> Rec {
    use Ty::*;
    zip(&INFO, &[Str, Num, Num, Str, Str, Str])
}

pub fn stage() -> Rec {
    use Ty::*;
    zip(&STAGE, &[Int, Str, Str, Str, Str, Num, Num, Num, Num])
}

/// A stage row flattened out of its path.
pub fn flat_stage() -> Rec {
    use Ty::*;
    zip(&FLAT_STAGE, &[Int, Str, Str, Str, Str, Num, Num, Num, Num, Int])
}

pub fn path() -> Rec {
    let st = Ty::List(Box::new(Ty::Record(stage())));
    zip(
        &PATH,
        &[Ty::Record(summary()), Ty::Record(info()), Ty::Record(info()), st.clone(), st],
    )
}

pub fn aggressor() -> Rec {
    zip(&AGGRESSOR, &[Ty::Str, Ty::Num])
}

/// An aggressor row flattened out of its victim entry.
pub fn flat_aggressor() -> Rec {
    zip(&FLAT_AGGRESSOR, &[Ty::Str, Ty::Num, Ty::Int, Ty::Str])
}

pub fn xtalk() -> Rec {
    zip(&XTALK, &[Ty::Int, Ty::Str, Ty::List(Box::new(Ty::Record(aggressor()))), Ty::Str])
}

pub fn wire() -> Rec {
    zip(&WIRE, &[Ty::Str, Ty::Num, Ty::Num, Ty::Num])
}

pub fn lc() -> Rec {
    zip(&LC, &[Ty::Str, Ty::Str, Ty::Str])
}

pub fn clk() -> Rec {
    zip(&CLK, &[Ty::Str, Ty::Str, Ty::Num, Ty::Num])
}

pub fn freq() -> Rec {
    zip(&FREQ, &[Ty::Str, Ty::Num])
}

/// Sub-tables reachable with `from <kind>.<sub>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubTable {
    DataStages,
    ClockStages,
    Aggressors,
}

impl SubTable {
    pub fn as_str(self) -> &'static str {
        match self {
            SubTable::DataStages => "data_stages",
            SubTable::ClockStages => "clock_stages",
            SubTable::Aggressors => "aggressors",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "data_stages" => Some(SubTable::DataStages),
            "clock_stages" => Some(SubTable::ClockStages),
            "aggressors" => Some(SubTable::Aggressors),
            _ => None,
        }
    }

    pub fn valid_for(self, kind: ReportKind) -> bool {
        match self {
            SubTable::DataStages | SubTable::ClockStages => kind.is_path_report(),
            SubTable::Aggressors => kind.is_xtalk(),
        }
    }
}

/// Row type produced by a source.
pub fn source_row(kind: ReportKind, sub: Option<SubTable>) -> Rec {
    match (kind, sub) {
        (_, Some(SubTable::DataStages | SubTable::ClockStages)) => flat_stage(),
        (_, Some(SubTable::Aggressors)) => flat_aggressor(),
        (ReportKind::Max | ReportKind::Min, None) => path(),
        (ReportKind::XtalkMax | ReportKind::XtalkMin, None) => xtalk(),
        (ReportKind::Wire, None) => wire(),
        (ReportKind::Lc, None) => lc(),
        (ReportKind::Clk, None) => clk(),
        (ReportKind::Freq, None) => freq(),
    }
}
