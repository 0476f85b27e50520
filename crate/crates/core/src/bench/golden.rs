// SPDX-License-Identifier: Apache-2.0

//! Golden answers by direct scans of the report structs. Nothing here may
//! call into the query engine or the agents; a source-scan test enforces it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde_json::{json, Value as Json};

use crate::model::{CornerMode, Corpus, LcEntry, Payload, ReportDb, ReportKind, Stage, TimingPath, XtalkEntry};

pub(crate) fn max_paths(db: &ReportDb) -> &[TimingPath] {
    db.paths(ReportKind::Max).unwrap_or(&[])
}

pub(crate) fn path(db: &ReportDb, id: u64) -> Option<&TimingPath> {
    max_paths(db).iter().find(|p| p.summary.path_id == id)
}

fn xtalk(db: &ReportDb) -> &[XtalkEntry] {
    match db.lookup(ReportKind::XtalkMax) {
        Ok(Payload::XtalkMax(x)) => x,
        _ => &[],
    }
}

fn lc(db: &ReportDb) -> &[LcEntry] {
    match db.lookup(ReportKind::Lc) {
        Ok(Payload::Lc(l)) => l,
        _ => &[],
    }
}

fn rc_map(db: &ReportDb) -> HashMap<&str, f64> {
    match db.lookup(ReportKind::Wire) {
        Ok(Payload::Wire(w)) => w.iter().map(|w| (w.net.as_str(), w.worst_rc)).collect(),
        _ => HashMap::new(),
    }
}

/// First path with the smallest slack.
pub fn worst_slack_path(db: &ReportDb) -> Option<u64> {
    let mut best: Option<&TimingPath> = None;
    for p in max_paths(db) {
        if best.is_none_or(|b| p.summary.slack < b.summary.slack) {
            best = Some(p);
        }
    }
    best.map(|p| p.summary.path_id)
}

/// First element maximizing (or minimizing) `key`.
fn first_extreme<T>(items: &[T], key: impl Fn(&T) -> f64, min: bool) -> Option<&T> {
    let mut best: Option<(&T, f64)> = None;
    for it in items {
        let k = key(it);
        let better = match best {
            None => true,
            Some((_, b)) => if min { k < b } else { k > b },
        };
        if better {
            best = Some((it, k));
        }
    }
    best.map(|b| b.0)
}

pub fn check_violation(db: &ReportDb, id: u64) -> Option<Json> {
    path(db, id).map(|p| json!(p.summary.slack < 0.0))
}

fn attribute_value(p: &TimingPath, name: &str) -> Option<f64> {
    Some(match name {
        "slack" => p.summary.slack,
        "arrival" => p.summary.arrival,
        "constraint" => p.summary.constraint,
        "pbsa_adjustment" => p.data_info.pbsa_adjustment,
        "clock_arrival" => p.clock_info.arrival_time,
        _ => return None,
    })
}

/// Worst means smallest for slack and constraint, largest otherwise.
pub fn worst_attribute(db: &ReportDb, name: &str) -> Option<Json> {
    let min = matches!(name, "slack" | "constraint");
    attribute_value(max_paths(db).first()?, name)?;
    let p = first_extreme(max_paths(db), |p| attribute_value(p, name).unwrap_or(f64::NAN), min)?;
    Some(json!({"path_id": p.summary.path_id, "value": attribute_value(p, name)}))
}

fn column_value(s: &Stage, col: &str) -> Option<f64> {
    Some(match col {
        "delay" => s.delay,
        "slew" => s.slew,
        "xtalk_delta" => s.xtalk_delta,
        "cumulative" => s.cumulative,
        _ => return None,
    })
}

pub fn worst_column(db: &ReportDb, col: &str) -> Option<Json> {
    let mut best: Option<(u64, &Stage, f64)> = None;
    for p in max_paths(db) {
        for s in &p.data_stages {
            let v = column_value(s, col)?;
            if best.as_ref().is_none_or(|b| v > b.2) {
                best = Some((p.summary.path_id, s, v));
            }
        }
    }
    best.map(|(id, s, v)| json!({"path_id": id, "point": s.point, "value": v}))
}

pub fn path_origin(db: &ReportDb, id: u64) -> Option<Json> {
    path(db, id).map(|p| serde_json::to_value(p.summary.internal_external).expect("enum"))
}

pub fn slowest_stage(db: &ReportDb, id: u64) -> Option<Json> {
    let s = first_extreme(&path(db, id)?.data_stages, |s| s.delay, false)?;
    Some(json!({"index": s.index, "point": s.point}))
}

pub fn max_xtalk_net(db: &ReportDb, id: u64) -> Option<Json> {
    let s = first_extreme(&path(db, id)?.data_stages, |s| s.xtalk_delta, false)?;
    Some(json!(s.net))
}

pub fn slew_on_net(db: &ReportDb, id: u64, net: &str) -> Option<Json> {
    path(db, id)?.data_stages.iter().find(|s| s.net == net).map(|s| json!(s.slew))
}

pub fn goes_through(db: &ReportDb, id: u64, net: &str) -> Option<Json> {
    Some(json!(path(db, id)?.data_stages.iter().any(|s| s.net == net)))
}

pub fn data_arc_rising(db: &ReportDb, id: u64, clock: &str) -> Option<Json> {
    let d = &path(db, id)?.data_info;
    Some(json!(d.launch_clock == clock && d.clock_edge == crate::model::ClockEdge::Rise))
}

pub fn missing_clk(db: &ReportDb, id: u64) -> Option<Json> {
    let p = path(db, id)?;
    let nets: BTreeSet<&str> = p.clock_stages.iter().map(|s| s.net.as_str()).collect();
    let Ok(Payload::Clk(entries)) = db.lookup(ReportKind::Clk) else { return None };
    let items: Vec<Json> = entries
        .iter()
        .filter(|e| nets.contains(e.net.as_str()))
        .filter_map(|e| {
            let mut missing = Vec::new();
            if e.rise_arrival.is_none() {
                missing.push("rise");
            }
            if e.fall_arrival.is_none() {
                missing.push("fall");
            }
            (!missing.is_empty()).then(|| json!({"clock": e.clock, "net": e.net, "missing": missing}))
        })
        .collect();
    Some(Json::Array(items))
}

/// Consecutive data stage pairs whose nets differ in RC by more than the
/// threshold, optionally limited to a stage index set.
fn rc_pairs(db: &ReportDb, id: u64, only: Option<&BTreeSet<u32>>, threshold: f64) -> Option<Vec<(String, String, f64)>> {
    let p = path(db, id)?;
    let rc = rc_map(db);
    let mut out = Vec::new();
    for w in p.data_stages.windows(2) {
        if w[1].index != w[0].index + 1 {
            continue;
        }
        if let Some(s) = only {
            if !s.contains(&w[0].index) || !s.contains(&w[1].index) {
                continue;
            }
        }
        if let (Some(a), Some(b)) = (rc.get(w[0].net.as_str()), rc.get(w[1].net.as_str())) {
            if (a - b).abs() > threshold {
                out.push((w[0].net.clone(), w[1].net.clone(), a - b));
            }
        }
    }
    Some(out)
}

pub fn m2(db: &ReportDb, id: u64, threshold: f64) -> Option<Json> {
    let pairs = rc_pairs(db, id, None, threshold)?;
    Some(Json::Array(pairs.into_iter().map(|(a, b, m)| json!({"a": a, "b": b, "mismatch": m})).collect()))
}

fn unusual_on(db: &ReportDb, nets: &BTreeSet<&str>, deny: &[String]) -> Vec<Json> {
    lc(db)
        .iter()
        .filter(|e| nets.contains(e.net.as_str()) && deny.contains(&e.constraint_kind))
        .map(|e| json!({"net": e.net, "constraint_kind": e.constraint_kind, "value": e.value}))
        .collect()
}

/// Victims of `id` (limited to `among` when given) and their worst aggressors.
fn victim_nets<'a>(db: &'a ReportDb, id: u64, among: Option<&BTreeSet<&str>>) -> BTreeSet<&'a str> {
    xtalk(db)
        .iter()
        .filter(|x| x.path_id == id && among.is_none_or(|a| a.contains(x.victim.as_str())))
        .flat_map(|x| [x.victim.as_str(), x.worst_aggressor.as_str()])
        .collect()
}

pub fn m3(db: &ReportDb, id: u64, deny: &[String]) -> Option<Json> {
    path(db, id)?;
    Some(Json::Array(unusual_on(db, &victim_nets(db, id, None), deny)))
}

pub fn m4(db: &ReportDb, id: u64, threshold: f64) -> Option<Json> {
    path(db, id)?;
    let rc = rc_map(db);
    let mut items = Vec::new();
    for x in xtalk(db).iter().filter(|x| x.path_id == id) {
        for a in &x.aggressors {
            if let (Some(v), Some(g)) = (rc.get(x.victim.as_str()), rc.get(a.net.as_str())) {
                if (v - g).abs() > threshold {
                    items.push(json!({"victim": x.victim, "aggressor": a.net, "mismatch": v - g}));
                }
            }
        }
    }
    Some(Json::Array(items))
}

pub fn m5(db: &ReportDb, id: u64) -> Option<Json> {
    let p = path(db, id)?;
    let mut slow: Vec<&Stage> = p.data_stages.iter().collect();
    // Stable: equal delays keep table order.
    slow.sort_by(|a, b| b.delay.total_cmp(&a.delay));
    slow.truncate(3);
    let rc = rc_map(db);
    let mut best: Option<(&str, f64)> = None;
    for s in &slow {
        if let Some(&r) = rc.get(s.net.as_str()) {
            if best.is_none_or(|b| r > b.1) {
                best = Some((s.net.as_str(), r));
            }
        }
    }
    let (h, _) = best?;
    let mut nets: BTreeSet<&str> = BTreeSet::from([h]);
    for x in xtalk(db).iter().filter(|x| x.path_id == id && x.victim == h) {
        nets.extend(x.aggressors.iter().map(|a| a.net.as_str()));
    }
    let constraints: Vec<Json> = lc(db)
        .iter()
        .filter(|e| nets.contains(e.net.as_str()))
        .map(|e| json!({"net": e.net, "constraint_kind": e.constraint_kind, "value": e.value}))
        .collect();
    Some(json!({"net": h, "constraints": constraints}))
}

/// Cross-mode comparison of one path's data stage table.
pub fn m6(corpus: &Corpus, cms: &[CornerMode], id: u64) -> Option<Json> {
    let mut tables: Vec<&[Stage]> = Vec::new();
    let mut counts = serde_json::Map::new();
    for cm in cms {
        let p = path(corpus.get(cm)?, id)?;
        counts.insert(cm.to_string(), json!(p.data_stages.len()));
        tables.push(&p.data_stages);
    }
    let rows = tables.iter().map(|t| t.len()).min()?;
    let mut consistent = tables.iter().all(|t| t.len() == tables[0].len());
    let mut worst: Option<(u32, &str, f64)> = None;
    for r in 0..rows {
        consistent &= tables.iter().all(|t| t[r].point == tables[0][r].point);
        let hi = tables.iter().map(|t| t[r].delay).fold(f64::MIN, f64::max);
        let lo = tables.iter().map(|t| t[r].delay).fold(f64::MAX, f64::min);
        if worst.is_none_or(|w| hi - lo > w.2) {
            worst = Some((tables[0][r].index, &tables[0][r].point, hi - lo));
        }
    }
    let mismatch = worst.map(|(index, point, delta)| json!({"index": index, "point": point, "delta": delta}));
    Some(json!({"stage_counts": counts, "points_consistent": consistent, "max_delay_mismatch": mismatch}))
}

pub fn m7(db: &ReportDb, selections: &[(u64, Vec<u32>)], threshold: f64, deny: &[String]) -> Option<Json> {
    let mut pairs = Vec::new();
    let mut nets: BTreeSet<&str> = BTreeSet::new();
    for (id, stages) in selections {
        let sel: BTreeSet<u32> = stages.iter().copied().collect();
        for (a, b, m) in rc_pairs(db, *id, Some(&sel), threshold)? {
            pairs.push(json!({"path_id": id, "a": a, "b": b, "mismatch": m}));
        }
        let p = path(db, *id)?;
        let selected: BTreeSet<&str> = p.data_stages.iter().filter(|s| sel.contains(&s.index)).map(|s| s.net.as_str()).collect();
        nets.extend(victim_nets(db, *id, Some(&selected)));
    }
    Some(json!({"rc_pairs": pairs, "unusual_lc": unusual_on(db, &nets, deny)}))
}

fn tagged(items: Json, cm: &CornerMode) -> Vec<Json> {
    let mut out = Vec::new();
    for mut it in items.as_array().cloned().unwrap_or_default() {
        if let Some(o) = it.as_object_mut() {
            o.insert("corner_mode".into(), json!(cm.to_string()));
        }
        out.push(it);
    }
    out
}

/// Per corner/mode items of `f` on each worst-slack path, tagged and unioned.
pub fn across_modes(corpus: &Corpus, cms: &[CornerMode], f: impl Fn(&ReportDb, u64) -> Option<Json>) -> Option<Json> {
    let mut all = Vec::new();
    for cm in cms {
        let db = corpus.get(cm)?;
        all.extend(tagged(f(db, worst_slack_path(db)?)?, cm));
    }
    Some(Json::Array(all))
}

pub fn m10(corpus: &Corpus, cms: &[CornerMode], threshold: f64, deny: &[String]) -> Option<Json> {
    let mut pairs = Vec::new();
    let mut lcs = Vec::new();
    for cm in cms {
        let db = corpus.get(cm)?;
        let id = worst_slack_path(db)?;
        let rc: Vec<Json> = rc_pairs(db, id, None, threshold)?
            .into_iter()
            .map(|(a, b, m)| json!({"path_id": id, "a": a, "b": b, "mismatch": m}))
            .collect();
        pairs.extend(tagged(Json::Array(rc), cm));
        lcs.extend(tagged(m3(db, id, deny)?, cm));
    }
    Some(json!({"rc_pairs": pairs, "unusual_lc": lcs}))
}

/// Corner/modes grouped by corner, in corpus order.
pub fn corners(corpus: &Corpus) -> BTreeMap<String, Vec<CornerMode>> {
    let mut out: BTreeMap<String, Vec<CornerMode>> = BTreeMap::new();
    for cm in corpus.corner_modes() {
        out.entry(cm.corner().to_string()).or_default().push(cm.clone());
    }
    out
}
