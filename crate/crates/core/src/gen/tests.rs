// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeSet, HashMap};

use super::*;
use crate::model::{ReportKind, TIME_TOLERANCE_PS};
use crate::parser::{parse_report, serialize};

fn small() -> GenSpec {
    GenSpec { paths_per_report: 40, ..GenSpec::default() }
}

fn wire_map(db: &ReportDb) -> HashMap<&str, f64> {
    match db.lookup(ReportKind::Wire).unwrap() {
        Payload::Wire(w) => w.iter().map(|w| (w.net.as_str(), w.worst_rc)).collect(),
        _ => unreachable!(),
    }
}

#[test]
fn generated_corpus_validates() {
    let (corpus, truth) = generate(&small()).unwrap();
    assert_eq!(corpus.databases.len(), 6);
    assert_eq!(truth.corner_modes.len(), 6);
    assert!(corpus.validate().is_empty(), "{:?}", corpus.validate());
    assert!(corpus.manifest.missing_kinds.is_empty());
}

#[test]
fn same_seed_is_byte_identical() {
    let spec = small();
    let render = |c: &Corpus| -> String {
        c.databases.iter().flat_map(|(cm, db)| db.payloads().map(move |p| serialize(p, cm))).collect()
    };
    let (a, ta) = generate(&spec).unwrap();
    let (b, tb) = generate(&spec).unwrap();
    assert_eq!(render(&a), render(&b));
    assert_eq!(serde_json::to_string(&ta).unwrap(), serde_json::to_string(&tb).unwrap());
    let (c, _) = generate(&GenSpec { seed: 8, ..spec }).unwrap();
    assert_ne!(render(&a), render(&c));
}

#[test]
fn topology_is_shared_across_corner_modes() {
    let (corpus, _) = generate(&small()).unwrap();
    let shapes: Vec<Vec<(u64, Vec<String>)>> = corpus
        .databases
        .values()
        .map(|db| {
            db.paths(ReportKind::Max)
                .unwrap()
                .iter()
                .map(|p| (p.summary.path_id, p.data_stages.iter().map(|s| s.net.clone()).collect()))
                .collect()
        })
        .collect();
    assert!(shapes.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn reports_roundtrip_through_text() {
    let (corpus, _) = generate(&small()).unwrap();
    for (cm, db) in &corpus.databases {
        for p in db.payloads() {
            let back = parse_report(&serialize(p, cm), p.kind()).unwrap();
            assert!(back.diagnostics.is_empty());
            assert_eq!(&back.payload, p, "{cm} {}", p.kind());
        }
    }
}

#[test]
fn violating_and_worst_slack_match_scan() {
    let spec = small();
    let (corpus, truth) = generate(&spec).unwrap();
    for (cm, db) in &corpus.databases {
        let t = truth.get(cm).unwrap();
        let paths = db.paths(ReportKind::Max).unwrap();
        let mut violating: Vec<u64> = paths.iter().filter(|p| p.summary.slack < 0.0).map(|p| p.summary.path_id).collect();
        violating.sort_unstable();
        assert_eq!(violating, t.violating_paths);
        assert_eq!(violating.len(), spec.injection.violating_path);
        let min = paths.iter().map(|p| p.summary.slack).fold(f64::INFINITY, f64::min);
        let at_min: Vec<u64> = paths.iter().filter(|p| p.summary.slack == min).map(|p| p.summary.path_id).collect();
        assert_eq!(at_min, vec![t.worst_slack_path]);
        assert_eq!(t.anomaly_paths[0], t.worst_slack_path);
        for p in paths.iter().filter(|p| p.summary.slack >= 0.0) {
            assert!((30.0..=400.0).contains(&p.summary.slack) || p.summary.path_id == t.worst_slack_path);
        }
    }
}

#[test]
fn no_violations_when_none_requested() {
    let mut spec = small();
    spec.injection.violating_path = 0;
    let (corpus, truth) = generate(&spec).unwrap();
    for (cm, db) in &corpus.databases {
        assert!(db.paths(ReportKind::Max).unwrap().iter().all(|p| p.summary.slack > 0.0));
        assert!(truth.get(cm).unwrap().violating_paths.is_empty());
    }
}

#[test]
fn rc_mismatch_pairs_match_exhaustive_scan() {
    let spec = small();
    let (corpus, truth) = generate(&spec).unwrap();
    for (cm, db) in &corpus.databases {
        let rc = wire_map(db);
        let mut found = Vec::new();
        for p in db.paths(ReportKind::Max).unwrap() {
            for (a, b) in neighbor_pairs(p) {
                let d = rc[a] - rc[b];
                if d.abs() > spec.rc_threshold_ps {
                    found.push((p.summary.path_id, a.to_string(), b.to_string(), d));
                }
                // Clean pairs stay well below the threshold.
                assert!(d.abs() <= spec.rc_threshold_ps / 2.0 || d.abs() >= 2.0 * spec.rc_threshold_ps);
            }
        }
        let t = truth.get(cm).unwrap();
        assert_eq!(found.len(), spec.injection.high_rc_mismatch_pair);
        let mut expect: Vec<_> = t.rc_mismatch_pairs.iter().map(|m| (m.path_id, m.a.clone(), m.b.clone(), m.mismatch)).collect();
        expect.sort_by(|x, y| x.partial_cmp(y).unwrap());
        found.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (f, e) in found.iter().zip(&expect) {
            assert_eq!((f.0, &f.1, &f.2), (e.0, &e.1, &e.2));
            assert!((f.3 - e.3).abs() < TIME_TOLERANCE_PS);
        }
        let anomaly: BTreeSet<u64> = t.anomaly_paths.iter().copied().collect();
        assert!(t.rc_mismatch_pairs.iter().all(|m| anomaly.contains(&m.path_id)));
    }
}

#[test]
fn xtalk_structure_matches_truth() {
    let spec = small();
    let (corpus, truth) = generate(&spec).unwrap();
    for (cm, db) in &corpus.databases {
        let t = truth.get(cm).unwrap();
        let xtalk = db.lookup(ReportKind::XtalkMax).unwrap().xtalk().unwrap();
        assert_eq!(t.dominant_pairs.len(), spec.injection.dominant_aggressor);
        for d in &t.dominant_pairs {
            let e = xtalk.iter().find(|e| e.path_id == d.path_id && e.victim == d.victim).unwrap();
            assert_eq!(e.worst_aggressor, d.aggressor);
            let top = e.aggressors.iter().find(|a| a.net == d.aggressor).unwrap().coupling_delta;
            assert!(e.aggressors.iter().filter(|a| a.net != d.aggressor).all(|a| a.coupling_delta <= top / 2.0));
        }
        for p in db.paths(ReportKind::Max).unwrap() {
            // Stage deltas equal the summed aggressor deltas of the victim.
            for s in &p.data_stages {
                let sum: f64 = xtalk
                    .iter()
                    .filter(|e| e.path_id == p.summary.path_id && e.victim == s.net)
                    .flat_map(|e| e.aggressors.iter().map(|a| a.coupling_delta))
                    .sum();
                assert!((sum - s.xtalk_delta).abs() < TIME_TOLERANCE_PS);
            }
            let max = p.data_stages.iter().map(|s| s.xtalk_delta).fold(0.0, f64::max);
            let at_max: Vec<&str> =
                p.data_stages.iter().filter(|s| s.xtalk_delta == max && max > 0.0).map(|s| s.net.as_str()).collect();
            assert_eq!(at_max.first().copied(), t.worst_xtalk_net.get(&p.summary.path_id).map(String::as_str));
            assert!(at_max.len() <= 1);
        }
    }
}

#[test]
fn aggressor_rc_mismatch_matches_scan() {
    let spec = small();
    let (corpus, truth) = generate(&spec).unwrap();
    for (cm, db) in &corpus.databases {
        let rc = wire_map(db);
        let t = truth.get(cm).unwrap();
        let xtalk = db.lookup(ReportKind::XtalkMax).unwrap().xtalk().unwrap();
        let mut found = BTreeSet::new();
        for e in xtalk {
            for a in &e.aggressors {
                if (rc[e.victim.as_str()] - rc[a.net.as_str()]).abs() > spec.rc_threshold_ps {
                    found.insert((e.victim.clone(), a.net.clone()));
                }
            }
        }
        let expect: BTreeSet<_> = t.aggressor_rc_mismatch.iter().map(|m| (m.victim.clone(), m.aggressor.clone())).collect();
        assert_eq!(found, expect);
        assert_eq!(expect.len(), spec.injection.aggressor_rc_mismatch);
    }
}

#[test]
fn unusual_lc_sits_on_pair_nets() {
    let spec = small();
    let (corpus, truth) = generate(&spec).unwrap();
    for (cm, db) in &corpus.databases {
        let t = truth.get(cm).unwrap();
        let Payload::Lc(lc) = db.lookup(ReportKind::Lc).unwrap() else { unreachable!() };
        let deny: Vec<&LcEntry> = lc.iter().filter(|e| spec.lc_deny_set.contains(&e.constraint_kind)).collect();
        assert_eq!(deny.len(), spec.injection.unusual_lc);
        assert!(lc.iter().all(|e| !e.unusual));
        let pair_nets: BTreeSet<&str> =
            t.dominant_pairs.iter().flat_map(|d| [d.victim.as_str(), d.aggressor.as_str()]).collect();
        for u in &t.unusual_lc {
            assert!(pair_nets.contains(u.net.as_str()));
            assert!(deny.iter().any(|e| e.net == u.net && e.constraint_kind == u.constraint_kind && e.value == u.value));
        }
    }
}

#[test]
fn missing_clock_signals_match_report() {
    let spec = small();
    let (corpus, truth) = generate(&spec).unwrap();
    for (cm, db) in &corpus.databases {
        let t = truth.get(cm).unwrap();
        let Payload::Clk(clk) = db.lookup(ReportKind::Clk).unwrap() else { unreachable!() };
        let incomplete: BTreeSet<&str> = clk.iter().filter(|e| e.is_incomplete()).map(|e| e.net.as_str()).collect();
        let expect: BTreeSet<&str> = t.missing_clk.iter().map(|m| m.net.as_str()).collect();
        assert_eq!(incomplete, expect);
        assert_eq!(expect.len(), spec.injection.missing_clk_edge);
        for p in db.paths(ReportKind::Max).unwrap() {
            let touches = p.clock_stages.iter().any(|s| expect.contains(s.net.as_str()));
            assert_eq!(touches, p.clock_info.clock_edge == ClockEdge::Missing);
            // Clock stage arrivals agree with the clock report.
            for s in &p.clock_stages {
                let e = clk.iter().find(|e| e.net == s.net).unwrap();
                if let Some(r) = e.rise_arrival {
                    assert!((r - s.cumulative).abs() < TIME_TOLERANCE_PS);
                }
            }
        }
        let anomaly_clock_nets: BTreeSet<&str> = t
            .anomaly_paths
            .iter()
            .flat_map(|id| db.path_by_id(ReportKind::Max, *id).unwrap().clock_stages.iter().map(|s| s.net.as_str()))
            .collect();
        assert!(expect.is_subset(&anomaly_clock_nets));
    }
}

#[test]
fn infeasible_specs_are_rejected() {
    let cases = [
        GenSpec { corners: vec![], ..small() },
        GenSpec { paths_per_report: 0, ..small() },
        GenSpec { anomaly_paths: 0, ..small() },
        GenSpec { injection: InjectionPlan { violating_path: 41, ..InjectionPlan::default() }, ..small() },
        GenSpec { injection: InjectionPlan { missing_clk_edge: 7, ..InjectionPlan::default() }, ..small() },
        GenSpec { injection: InjectionPlan { unusual_lc: 9, ..InjectionPlan::default() }, ..small() },
        GenSpec { lc_deny_set: vec!["dont_touch".into()], ..small() },
        GenSpec { rc_threshold_ps: 0.0, ..small() },
        GenSpec { corners: vec!["T_T".into()], ..small() },
    ];
    for spec in cases {
        assert!(matches!(generate(&spec), Err(GenError::SpecInfeasible(_))), "{spec:?}");
    }
}

#[test]
fn single_path_spec_works() {
    let spec = GenSpec {
        paths_per_report: 1,
        anomaly_paths: 1,
        corners: vec!["FF".into()],
        modes: vec!["func".into()],
        injection: InjectionPlan {
            missing_clk_edge: 1,
            high_rc_mismatch_pair: 1,
            unusual_lc: 1,
            dominant_aggressor: 1,
            violating_path: 1,
            aggressor_rc_mismatch: 1,
        },
        ..GenSpec::default()
    };
    let (corpus, truth) = generate(&spec).unwrap();
    assert!(corpus.validate().is_empty());
    let t = truth.corner_modes.values().next().unwrap();
    assert_eq!(t.violating_paths, vec![t.worst_slack_path]);
}

#[test]
fn truth_serializes_with_string_keys() {
    let (_, truth) = generate(&small()).unwrap();
    let json = serde_json::to_string(&truth).unwrap();
    let back: GroundTruth = serde_json::from_str(&json).unwrap();
    assert_eq!(back, truth);
}
