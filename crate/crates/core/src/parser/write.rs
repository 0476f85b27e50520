// SPDX-License-Identifier: Apache-2.0

//! Renders payloads back to report text. Numbers use the shortest
//! representation that parses back to the same `f64`, so a parse of the
//! output reproduces the payload exactly.

use std::fmt::Write as _;

use crate::model::{ArcInfo, ClockEdge, CornerMode, Edge, PathOrigin, Payload, Stage, TimingPath};

use super::STAGE_COLUMNS;

pub fn serialize(payload: &Payload, corner_mode: &CornerMode) -> String {
    let mut out = String::new();
    serialize_to(&mut out, payload, corner_mode);
    out
}

pub fn serialize_to(out: &mut String, payload: &Payload, corner_mode: &CornerMode) {
    let _ = writeln!(
        out,
        "# KIND {} CORNER {} MODE {} UNIT ps",
        payload.kind(),
        corner_mode.corner(),
        corner_mode.mode()
    );
    match payload {
        Payload::Max(paths) | Payload::Min(paths) => {
            for p in paths {
                out.push('\n');
                write_path(out, p);
            }
        }
        Payload::XtalkMax(entries) | Payload::XtalkMin(entries) => {
            for e in entries {
                let _ = writeln!(out, "Victim {} path {}", e.victim, e.path_id);
                for a in &e.aggressors {
                    let _ = writeln!(out, "  Aggr {} delta {}", a.net, a.coupling_delta);
                }
            }
        }
        Payload::Wire(nets) => {
            out.push_str("# net worst_r worst_c worst_rc\n");
            for n in nets {
                let _ = writeln!(out, "{} {} {} {}", n.net, n.worst_r, n.worst_c, n.worst_rc);
            }
        }
        Payload::Lc(entries) => {
            for e in entries {
                let _ = writeln!(out, "{} {} {}", e.net, e.constraint_kind, e.value);
            }
        }
        Payload::Clk(entries) => {
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
            for e in entries {
                let _ = writeln!(out, "{} {} rise {} fall {}", e.clock, e.net, opt(e.rise_arrival), opt(e.fall_arrival));
            }
        }
        Payload::Freq(map) => {
            for (clock, mhz) in map {
                let _ = writeln!(out, "{clock} {mhz}");
            }
        }
    }
}

fn write_path(out: &mut String, p: &TimingPath) {
    let s = &p.summary;
    let origin = match s.internal_external {
        PathOrigin::Internal => "internal",
        PathOrigin::External => "external",
    };
    let _ = writeln!(out, "Path {}", s.path_id);
    let _ = writeln!(out, "  Summary: startpoint {} endpoint {}", s.startpoint, s.endpoint);
    let _ = writeln!(out, "           slack {} constraint {} arrival {}", s.slack, s.constraint, s.arrival);
    let _ = writeln!(out, "           path_group {} type {}", s.path_group, origin);
    write_info(out, "DataInfo:", &p.data_info);
    write_info(out, "ClockInfo:", &p.clock_info);
    write_table(out, "DataStages:", &p.data_stages);
    write_table(out, "ClockStages:", &p.clock_stages);
}

fn write_info(out: &mut String, label: &str, info: &ArcInfo) {
    let edge = match info.clock_edge {
        ClockEdge::Rise => "rise",
        ClockEdge::Fall => "fall",
        ClockEdge::Missing => "missing",
    };
    let pad = " ".repeat(label.len() + 3);
    let _ = writeln!(out, "  {label} pbsa_adjustment {} arrival_time {}", info.pbsa_adjustment, info.arrival_time);
    let _ = writeln!(
        out,
        "{pad}launch_clock {} capture_clock {} clock_edge {edge}",
        info.launch_clock, info.capture_clock
    );
}

fn write_table(out: &mut String, label: &str, stages: &[Stage]) {
    let rows: Vec<[String; 9]> = stages
        .iter()
        .map(|s| {
            [
                s.index.to_string(),
                s.point.clone(),
                s.net.clone(),
                s.cell.clone(),
                match s.edge {
                    Edge::Rise => "rise".into(),
                    Edge::Fall => "fall".into(),
                },
                s.delay.to_string(),
                s.slew.to_string(),
                s.xtalk_delta.to_string(),
                s.cumulative.to_string(),
            ]
        })
        .collect();
    let mut widths = STAGE_COLUMNS.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let _ = writeln!(out, "  {label}");
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        out.push_str("    ");
        for (i, (cell, w)) in cells.zip(widths).enumerate() {
            if i > 0 {
                out.push_str(" | ");
            }
            if i + 1 == widths.len() {
                out.push_str(cell);
            } else {
                let _ = write!(out, "{cell:<w$}");
            }
        }
        out.push('\n');
    };
    line(out, &mut STAGE_COLUMNS.iter().copied());
    out.push_str("    ");
    let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&sep.join("-+-"));
    out.push('\n');
    for row in &rows {
        line(out, &mut row.iter().map(String::as_str));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Aggressor, ClkReportEntry, LcEntry, ReportKind, WireNet, XtalkEntry};
    use crate::parser::parse_report;

    fn roundtrip(p: &Payload) -> Payload {
        let cm: CornerMode = "SS_scan".parse().unwrap();
        let text = serialize(p, &cm);
        let r = parse_report(&text, p.kind()).unwrap();
        assert!(r.diagnostics.is_empty(), "{:?}\n{text}", r.diagnostics);
        assert_eq!(r.header.corner_mode, cm);
        r.payload
    }

    #[test]
    fn fixture_roundtrip() {
        let r = parse_report(include_str!("../../fixtures/max_one_path.rpt"), ReportKind::Max).unwrap();
        assert_eq!(roundtrip(&r.payload), r.payload);
    }

    #[test]
    fn missing_clock_edge_roundtrips() {
        let mut p = crate::model::tests::path(3);
        p.data_info.clock_edge = ClockEdge::Missing;
        let payload = Payload::Min(vec![p]);
        let back = roundtrip(&payload);
        assert_eq!(back, payload);
        assert_eq!(back.paths().unwrap()[0].data_info.clock_edge, ClockEdge::Missing);
    }

    #[test]
    fn row_payloads_roundtrip() {
        let xt = Payload::XtalkMin(vec![XtalkEntry::new(
            4,
            "v".into(),
            vec![Aggressor { net: "b".into(), coupling_delta: 0.1 }, Aggressor { net: "a".into(), coupling_delta: 7.333 }],
        )
        .unwrap()]);
        assert_eq!(roundtrip(&xt), xt);
        let wire = Payload::Wire(vec![WireNet { net: "n".into(), worst_r: 120.5, worst_c: 3.25, worst_rc: 0.391625 }]);
        assert_eq!(roundtrip(&wire), wire);
        let lc = Payload::Lc(vec![LcEntry { net: "n".into(), constraint_kind: "disable-arc".into(), value: "A->Z".into(), unusual: false }]);
        assert_eq!(roundtrip(&lc), lc);
        let clk = Payload::Clk(vec![ClkReportEntry { clock: "C".into(), net: "n".into(), rise_arrival: None, fall_arrival: Some(-0.0) }]);
        assert_eq!(roundtrip(&clk), clk);
        let freq = Payload::Freq([("CLK_A".to_string(), 1250.0), ("CLK_B".to_string(), 833.333)].into());
        assert_eq!(roundtrip(&freq), freq);
    }
}
