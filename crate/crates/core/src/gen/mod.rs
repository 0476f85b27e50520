// SPDX-License-Identifier: Apache-2.0

//! Seeded MCMM corpus generator.
//!
//! The design topology (path ids, stage points, nets, clock tree) is shared
//! by every corner/mode and derives from the spec seed alone. Timing values
//! and injected anomalies are drawn per corner/mode from an independent
//! sub-seed, so databases can be generated in parallel and the output is a
//! pure function of the [`GenSpec`].
//!
//! All arithmetic runs on integer femtoseconds and converts to picoseconds
//! at the end, which keeps every printed value short and exact.

mod rc;
mod truth;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Aggressor, ArcInfo, ArcRole, ClkReportEntry, ClockEdge, CornerMode, Corpus, Edge, LcEntry, Manifest,
    PathOrigin, PathSummary, Payload, ReportDb, Stage, TimingPath, WireNet, XtalkEntry,
};

pub use rc::{inject_rc_mismatch, neighbor_pairs, RcMismatch};
pub use truth::{
    AggressorRcMismatch, CmTruth, DominantPair, GroundTruth, MissingClkSignal, UnusualLc,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("infeasible generator spec: {0}")]
    SpecInfeasible(String),
}

/// Number of anomalies of each kind to inject per corner/mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionPlan {
    pub missing_clk_edge: usize,
    pub high_rc_mismatch_pair: usize,
    pub unusual_lc: usize,
    pub dominant_aggressor: usize,
    pub violating_path: usize,
    /// Victim/aggressor pairs whose worst RC values differ beyond threshold.
    pub aggressor_rc_mismatch: usize,
}

impl Default for InjectionPlan {
    fn default() -> Self {
        Self {
            missing_clk_edge: 2,
            high_rc_mismatch_pair: 2,
            unusual_lc: 3,
            dominant_aggressor: 4,
            violating_path: 3,
            aggressor_rc_mismatch: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub seed: u64,
    pub corners: Vec<String>,
    pub modes: Vec<String>,
    pub paths_per_report: usize,
    pub injection: InjectionPlan,
    /// Paths per corner/mode that carry the multi-report anomalies; the
    /// first is always the worst-slack path.
    pub anomaly_paths: usize,
    pub rc_threshold_ps: f64,
    /// LC constraint kinds considered unusual.
    pub lc_deny_set: Vec<String>,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            corners: vec!["TT".into(), "SS".into()],
            modes: vec!["read".into(), "write".into(), "scan".into()],
            paths_per_report: 200,
            injection: InjectionPlan::default(),
            anomaly_paths: 2,
            rc_threshold_ps: 50.0,
            lc_deny_set: default_deny_set(),
        }
    }
}

pub fn default_deny_set() -> Vec<String> {
    vec!["case-value".into(), "disable-arc".into()]
}

const BENIGN_LC: [(&str, &[&str]); 4] = [
    ("max_transition", &["30", "45", "60"]),
    ("max_capacitance", &["12", "20", "35"]),
    ("dont_touch", &["true"]),
    ("max_fanout", &["8", "16"]),
];
const DENY_VALUES: [(&str, &[&str]); 2] = [("case-value", &["1'b0", "1'b1"]), ("disable-arc", &["A->Z", "B->Z"])];
const DATA_CELLS: [&str; 8] = ["INVX1", "INVX4", "NAND2X2", "NOR2X1", "AOI21X1", "OAI22X2", "BUFX4", "XOR2X1"];
const CLOCKS: [&str; 3] = ["CLK_A", "CLK_B", "CLK_C"];
const CLOCK_BRANCHES: usize = 4;
const CLOCK_LEAVES: usize = 16;
const MIN_STAGES: usize = 6;
const MAX_STAGES: usize = 12;

type Fs = i64;

pub(crate) fn ps(fs: Fs) -> f64 {
    fs as f64 / 1000.0
}

fn fs_range(rng: &mut ChaCha8Rng, lo_ps: f64, hi_ps: f64) -> Fs {
    rng.gen_range((lo_ps * 1000.0) as Fs..=(hi_ps * 1000.0) as Fs)
}

/// Topology shared by every corner/mode.
struct Design {
    paths: Vec<PathShape>,
}

struct PathShape {
    id: u64,
    block: usize,
    startpoint: String,
    endpoint: String,
    points: Vec<String>,
    nets: Vec<String>,
    cells: Vec<&'static str>,
    launch_clock: &'static str,
    capture_clock: &'static str,
    /// (branch, leaf) in the capture clock's tree.
    clock_leaf: (usize, usize),
    origin: PathOrigin,
}

fn clock_nets(clock: &str, (branch, leaf): (usize, usize)) -> [String; 3] {
    [
        format!("clk_tree/{clock}/root"),
        format!("clk_tree/{clock}/b{branch}"),
        format!("clk_tree/{clock}/l{leaf}"),
    ]
}

fn build_design(spec: &GenSpec) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ids = HashSet::new();
    let mut next_net = 0usize;
    let mut next_reg = 0usize;
    let paths = (0..spec.paths_per_report)
        .map(|i| {
            let id = loop {
                let id = rng.gen_range(100_000u64..1_000_000);
                if ids.insert(id) {
                    break id;
                }
            };
            let block = i % 8;
            let n = rng.gen_range(MIN_STAGES..=MAX_STAGES);
            let startpoint = format!("u_top/u_blk{block}/reg{next_reg}/Q");
            let endpoint = format!("u_top/u_blk{}/reg{}/D", rng.gen_range(0..8), next_reg + 1);
            next_reg += 2;
            let mut points = Vec::with_capacity(n);
            let mut nets = Vec::with_capacity(n);
            let mut cells = Vec::with_capacity(n);
            for j in 0..n {
                let net_id = next_net;
                next_net += 1;
                nets.push(format!("u_top/u_blk{block}/net{net_id}"));
                if j == 0 {
                    points.push(startpoint.clone());
                    cells.push("DFFQX1");
                } else if j + 1 == n {
                    points.push(endpoint.clone());
                    cells.push(*DATA_CELLS.choose(&mut rng).unwrap());
                } else {
                    points.push(format!("u_top/u_blk{block}/u{net_id}/Z"));
                    cells.push(*DATA_CELLS.choose(&mut rng).unwrap());
                }
            }
            let launch_clock = *CLOCKS.choose(&mut rng).unwrap();
            let capture_clock = if rng.gen_bool(0.9) { launch_clock } else { *CLOCKS.choose(&mut rng).unwrap() };
            let leaf = rng.gen_range(0..CLOCK_LEAVES);
            PathShape {
                id,
                block,
                startpoint,
                endpoint,
                points,
                nets,
                cells,
                launch_clock,
                capture_clock,
                clock_leaf: (leaf / (CLOCK_LEAVES / CLOCK_BRANCHES), leaf),
                origin: if rng.gen_bool(0.8) { PathOrigin::Internal } else { PathOrigin::External },
            }
        })
        .collect();
    Design { paths }
}

fn sub_seed(seed: u64, cm: &CornerMode) -> u64 {
    // FNV-1a over the rendered name, mixed with the spec seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in cm.to_string().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn check_feasible(spec: &GenSpec) -> Result<(), GenError> {
    let inj = &spec.injection;
    let fail = |m: String| Err(GenError::SpecInfeasible(m));
    if spec.corners.is_empty() || spec.modes.is_empty() {
        return fail("at least one corner and one mode are required".into());
    }
    if spec.paths_per_report == 0 {
        return fail("paths_per_report must be at least 1".into());
    }
    if !(spec.rc_threshold_ps > 0.0) {
        return fail("rc_threshold_ps must be positive".into());
    }
    let n = spec.paths_per_report;
    for (name, count) in [
        ("missing_clk_edge", inj.missing_clk_edge),
        ("high_rc_mismatch_pair", inj.high_rc_mismatch_pair),
        ("unusual_lc", inj.unusual_lc),
        ("dominant_aggressor", inj.dominant_aggressor),
        ("violating_path", inj.violating_path),
        ("aggressor_rc_mismatch", inj.aggressor_rc_mismatch),
        ("anomaly_paths", spec.anomaly_paths),
    ] {
        if count > n {
            return fail(format!("{name}={count} exceeds paths_per_report={n}"));
        }
    }
    if spec.anomaly_paths == 0 {
        return fail("anomaly_paths must be at least 1".into());
    }
    let k = spec.anomaly_paths;
    let per_path = |c: usize| c.div_ceil(k);
    if per_path(inj.dominant_aggressor) > MIN_STAGES - 1 {
        return fail(format!("dominant_aggressor={} needs more victims per path than stages allow", inj.dominant_aggressor));
    }
    if per_path(inj.high_rc_mismatch_pair) > MIN_STAGES - 1 {
        return fail(format!("high_rc_mismatch_pair={} exceeds neighbor pairs per path", inj.high_rc_mismatch_pair));
    }
    if inj.unusual_lc > 2 * inj.dominant_aggressor {
        return fail(format!("unusual_lc={} exceeds the {} victim/aggressor nets", inj.unusual_lc, 2 * inj.dominant_aggressor));
    }
    if inj.aggressor_rc_mismatch > inj.dominant_aggressor {
        return fail("aggressor_rc_mismatch exceeds dominant_aggressor".into());
    }
    if inj.missing_clk_edge > 3 * k {
        return fail(format!("missing_clk_edge={} exceeds the clock nets of {k} anomaly paths", inj.missing_clk_edge));
    }
    if spec.lc_deny_set.iter().any(|d| BENIGN_LC.iter().any(|(b, _)| b == d)) {
        return fail("lc_deny_set overlaps the benign constraint kinds".into());
    }
    if inj.unusual_lc > 0 && spec.lc_deny_set.is_empty() {
        return fail("unusual_lc requires a non-empty lc_deny_set".into());
    }
    Ok(())
}

/// Generates a corpus and the ground truth of every injected anomaly.
pub fn generate(spec: &GenSpec) -> Result<(Corpus, GroundTruth), GenError> {
    check_feasible(spec)?;
    let mut cms = Vec::new();
    for c in &spec.corners {
        for m in &spec.modes {
            let cm = CornerMode::new(c.clone(), m.clone())
                .map_err(|e| GenError::SpecInfeasible(e.to_string()))?;
            if cms.contains(&cm) {
                return Err(GenError::SpecInfeasible(format!("duplicate corner/mode {cm}")));
            }
            cms.push(cm);
        }
    }
    let design = build_design(spec);
    let results: Vec<(ReportDb, CmTruth)> = cms
        .par_iter()
        .map(|cm| generate_cm(spec, &design, cm))
        .collect::<Result<_, _>>()?;

    let mut databases = BTreeMap::new();
    let mut truths = BTreeMap::new();
    for (db, truth) in results {
        truths.insert(db.corner_mode.clone(), truth);
        databases.insert(db.corner_mode.clone(), db);
    }
    let manifest = Manifest {
        seed: Some(spec.seed),
        generator: serde_json::to_value(spec).ok(),
        ..Manifest::default()
    };
    let truth = GroundTruth {
        seed: spec.seed,
        rc_threshold_ps: spec.rc_threshold_ps,
        lc_deny_set: spec.lc_deny_set.clone(),
        corner_modes: truths,
    };
    Ok((Corpus::new(databases, manifest), truth))
}

struct CmBuilder {
    rng: ChaCha8Rng,
    next_aggr: usize,
}

/// Per-path values before assembly into a [`TimingPath`].
struct PathValues {
    delays: Vec<Fs>,
    slews: Vec<Fs>,
    xtalk: Vec<Fs>,
    slack: Fs,
    launch_edge: ClockEdge,
    pbsa: [Fs; 2],
}

fn generate_cm(spec: &GenSpec, design: &Design, cm: &CornerMode) -> Result<(ReportDb, CmTruth), GenError> {
    let mut b = CmBuilder { rng: ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, cm)), next_aggr: 0 };
    let inj = &spec.injection;
    let k = spec.anomaly_paths;
    let n = design.paths.len();

    // Anomaly paths: distinct, first one becomes the worst-slack path.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut b.rng);
    let anomaly: Vec<usize> = order[..k].to_vec();
    let mut violating: BTreeSet<usize> = BTreeSet::new();
    if inj.violating_path > 0 {
        violating.insert(anomaly[0]);
        for &i in order.iter().filter(|&&i| i != anomaly[0]) {
            if violating.len() == inj.violating_path {
                break;
            }
            violating.insert(i);
        }
    }

    let clock_tree = b.clock_tree();
    let mut values: Vec<PathValues> = (0..n).map(|i| b.path_values(violating.contains(&i))).collect();
    // The first anomaly path gets the unique minimum slack.
    let min_other = values.iter().enumerate().filter(|(i, _)| *i != anomaly[0]).map(|(_, v)| v.slack).min();
    values[anomaly[0]].slack = match (inj.violating_path > 0, min_other) {
        (true, Some(m)) => m.min(-5_000) - b.rng.gen_range(5_000..=20_000),
        (true, None) => -b.rng.gen_range(5_000..=150_000),
        (false, _) => b.rng.gen_range(5_000..=15_000),
    };

    // Cross-talk: anomaly paths carry the dominant victim/aggressor pairs.
    let mut xtalk: Vec<XtalkEntry> = Vec::new();
    let mut dominant: Vec<DominantPair> = Vec::new();
    let victims_per_anomaly = spread(inj.dominant_aggressor, k);
    for (i, shape) in design.paths.iter().enumerate() {
        let n_stages = shape.nets.len();
        let (victim_stages, is_anomaly) = match anomaly.iter().position(|&a| a == i) {
            Some(j) => (b.pick_stages(n_stages, victims_per_anomaly[j]), true),
            None if !anomaly.is_empty() => {
                let count = b.rng.gen_range(0..=2);
                (b.pick_stages(n_stages, count), false)
            }
            None => (Vec::new(), false),
        };
        loop {
            let mut entries = Vec::new();
            for &s in &victim_stages {
                let aggressors = b.aggressors(shape, is_anomaly);
                entries.push((s, XtalkEntry::new(shape.id, shape.nets[s].clone(), aggressors).expect("non-empty")));
            }
            let deltas: Vec<Fs> = entries
                .iter()
                .map(|(_, e)| e.aggressors.iter().map(|a| (a.coupling_delta * 1000.0).round() as Fs).sum())
                .collect();
            let max = deltas.iter().copied().max();
            if max.is_some_and(|m| deltas.iter().filter(|&&d| d == m).count() > 1) {
                continue;
            }
            let v = &mut values[i];
            v.xtalk = vec![0; n_stages];
            for ((s, e), d) in entries.iter().zip(&deltas) {
                v.xtalk[*s] = *d;
                if is_anomaly {
                    dominant.push(DominantPair {
                        path_id: shape.id,
                        stage: *s as u32,
                        victim: e.victim.clone(),
                        aggressor: e.worst_aggressor.clone(),
                    });
                }
            }
            xtalk.extend(entries.into_iter().map(|(_, e)| e));
            break;
        }
    }

    // Missing clock signals on the anomaly paths' clock networks.
    let mut missing: Vec<MissingClkSignal> = Vec::new();
    // Leaves first, round-robin over anomaly paths, so one missing net does
    // not blanket the whole design.
    let mut picked: Vec<(String, String)> = Vec::new();
    'outer: for depth in (0..3).rev() {
        for &a in &anomaly {
            if picked.len() == inj.missing_clk_edge {
                break 'outer;
            }
            let shape = &design.paths[a];
            let net = clock_nets(shape.capture_clock, shape.clock_leaf)[depth].clone();
            if !picked.iter().any(|(_, n)| *n == net) {
                picked.push((shape.capture_clock.to_string(), net));
            }
        }
    }
    if picked.len() < inj.missing_clk_edge {
        return Err(GenError::SpecInfeasible(format!(
            "only {} distinct clock nets on anomaly paths, {} missing signals requested",
            picked.len(),
            inj.missing_clk_edge
        )));
    }
    for (clock, net) in picked {
        let which = match b.rng.gen_range(0..3) {
            0 => vec![Edge::Rise],
            1 => vec![Edge::Fall],
            _ => vec![Edge::Rise, Edge::Fall],
        };
        missing.push(MissingClkSignal { clock, net, missing: which });
    }

    // Assemble paths.
    let missing_nets: HashSet<&str> = missing.iter().map(|m| m.net.as_str()).collect();
    let max_paths: Vec<TimingPath> = design
        .paths
        .iter()
        .zip(&values)
        .map(|(shape, v)| assemble_path(shape, v, &clock_tree, &missing_nets))
        .collect();

    // Wire report: path nets with clean neighbor RC, then injections.
    let thr = spec.rc_threshold_ps;
    let mut wire: Vec<WireNet> = Vec::new();
    let mut wire_index: BTreeMap<String, usize> = BTreeMap::new();
    for shape in &design.paths {
        let mut level = fs_range(&mut b.rng, 3.0 * thr, 6.0 * thr);
        for net in &shape.nets {
            level += b.rng.gen_range(-(thr * 100.0) as Fs..=(thr * 100.0) as Fs);
            level = level.max((thr * 1000.0) as Fs);
            wire_index.insert(net.clone(), wire.len());
            wire.push(b.wire_net(net, level));
        }
    }
    let anomaly_paths: Vec<&TimingPath> = anomaly.iter().map(|&a| &max_paths[a]).collect();
    let rc_pairs = inject_rc_mismatch(&mut wire, &anomaly_paths, inj.high_rc_mismatch_pair, thr, &mut b.rng)?;

    // Aggressor nets: RC close to their victim unless injected.
    let mut aggressor_rc: Vec<AggressorRcMismatch> = Vec::new();
    let mut rc_mismatch_pairs: HashSet<(String, String)> = HashSet::new();
    {
        let mut pairs: Vec<&DominantPair> = dominant.iter().collect();
        pairs.shuffle(&mut b.rng);
        for p in pairs.into_iter().take(inj.aggressor_rc_mismatch) {
            rc_mismatch_pairs.insert((p.victim.clone(), p.aggressor.clone()));
        }
    }
    for e in &xtalk {
        let victim_rc = (wire[wire_index[&e.victim]].worst_rc * 1000.0).round() as Fs;
        for a in &e.aggressors {
            let injected = a.net == e.worst_aggressor && rc_mismatch_pairs.contains(&(e.victim.clone(), a.net.clone()));
            let rc = if injected {
                let jump = fs_range(&mut b.rng, 2.5 * thr, 3.0 * thr);
                if victim_rc > jump + (thr * 1000.0) as Fs && b.rng.gen_bool(0.5) {
                    victim_rc - jump
                } else {
                    victim_rc + jump
                }
            } else {
                (victim_rc + b.rng.gen_range(-(thr * 300.0) as Fs..=(thr * 300.0) as Fs)).max(1_000)
            };
            wire_index.insert(a.net.clone(), wire.len());
            let w = b.wire_net(&a.net, rc);
            if injected {
                aggressor_rc.push(AggressorRcMismatch {
                    path_id: e.path_id,
                    victim: e.victim.clone(),
                    aggressor: a.net.clone(),
                    mismatch: round3(wire[wire_index[&e.victim]].worst_rc - w.worst_rc),
                });
            }
            wire.push(w);
        }
    }

    // Logic constraints: benign entries on a share of nets, every anomaly
    // pair net, and deny-set entries on the injected nets.
    let mut lc: Vec<LcEntry> = Vec::new();
    let mut anomaly_nets: Vec<(u64, String)> = Vec::new();
    for p in &dominant {
        for net in [&p.victim, &p.aggressor] {
            if !anomaly_nets.iter().any(|(_, n)| n == net) {
                anomaly_nets.push((p.path_id, net.clone()));
            }
        }
    }
    for &a in &anomaly {
        for net in &design.paths[a].nets {
            if !anomaly_nets.iter().any(|(_, n)| n == net) {
                anomaly_nets.push((design.paths[a].id, net.clone()));
            }
        }
    }
    let anomaly_set: HashSet<&str> = anomaly_nets.iter().map(|(_, n)| n.as_str()).collect();
    for w in &wire {
        if anomaly_set.contains(w.net.as_str()) || b.rng.gen_bool(0.25) {
            lc.push(b.benign_lc(&w.net));
        }
    }
    let mut unusual: Vec<UnusualLc> = Vec::new();
    {
        // Victim and aggressor nets of dominant pairs, round-robin across pairs.
        let mut pair_nets: Vec<(u64, String)> = Vec::new();
        for p in &dominant {
            pair_nets.push((p.path_id, p.victim.clone()));
        }
        for p in &dominant {
            pair_nets.push((p.path_id, p.aggressor.clone()));
        }
        for (path_id, net) in pair_nets.into_iter().take(spec.injection.unusual_lc) {
            let kind = spec.lc_deny_set[b.rng.gen_range(0..spec.lc_deny_set.len())].clone();
            let value = DENY_VALUES
                .iter()
                .find(|(k, _)| *k == kind)
                .map_or("1", |(_, vals)| vals[b.rng.gen_range(0..vals.len())])
                .to_string();
            let pos = b.rng.gen_range(0..=lc.len());
            lc.insert(pos, LcEntry { net: net.clone(), constraint_kind: kind.clone(), value: value.clone(), unusual: false });
            unusual.push(UnusualLc { path_id, net, constraint_kind: kind, value });
        }
    }

    // Clock report.
    let mut clk = Vec::new();
    for clock in CLOCKS {
        for (net, rise, fall) in clock_tree.entries(clock) {
            let miss = missing.iter().find(|m| m.net == net);
            let drop = |e: Edge| miss.is_some_and(|m| m.missing.contains(&e));
            clk.push(ClkReportEntry {
                clock: clock.to_string(),
                net,
                rise_arrival: (!drop(Edge::Rise)).then(|| ps(rise)),
                fall_arrival: (!drop(Edge::Fall)).then(|| ps(fall)),
            });
        }
    }

    let freq: BTreeMap<String, f64> = CLOCKS
        .iter()
        .map(|c| (c.to_string(), ps(b.rng.gen_range(500_000..=1_500_000))))
        .collect();

    // Hold-side reports reuse the topology with fresh values.
    let min_paths: Vec<TimingPath> = design
        .paths
        .iter()
        .map(|shape| {
            let mut v = b.path_values(false);
            v.slack = b.rng.gen_range(2_000..=80_000);
            v.delays.iter_mut().for_each(|d| *d /= 3);
            v.xtalk = vec![0; shape.nets.len()];
            assemble_path(shape, &v, &clock_tree, &missing_nets)
        })
        .collect();
    let mut xtalk_min = Vec::new();
    for shape in design.paths.iter().step_by(3) {
        let s = b.rng.gen_range(0..shape.nets.len());
        let aggressors = vec![Aggressor { net: b.new_aggr_name(shape), coupling_delta: ps(b.rng.gen_range(300..=4_000)) }];
        xtalk_min.push(XtalkEntry::new(shape.id, shape.nets[s].clone(), aggressors).expect("non-empty"));
    }

    let worst_xtalk_net: BTreeMap<u64, String> = max_paths
        .iter()
        .filter(|p| p.data_stages.iter().any(|s| s.xtalk_delta > 0.0))
        .map(|p| {
            let best = p.data_stages.iter().fold(&p.data_stages[0], |b, s| if s.xtalk_delta > b.xtalk_delta { s } else { b });
            (p.summary.path_id, best.net.clone())
        })
        .collect();

    let truth = CmTruth {
        path_count: max_paths.len(),
        violating_paths: {
            let mut v: Vec<u64> = violating.iter().map(|&i| design.paths[i].id).collect();
            v.sort_unstable();
            v
        },
        worst_slack_path: design.paths[anomaly[0]].id,
        anomaly_paths: anomaly.iter().map(|&a| design.paths[a].id).collect(),
        worst_xtalk_net,
        dominant_pairs: dominant,
        rc_mismatch_pairs: rc_pairs,
        aggressor_rc_mismatch: aggressor_rc,
        unusual_lc: unusual,
        missing_clk: missing,
    };

    let mut db = ReportDb::new(cm.clone());
    db.insert(Payload::Max(max_paths));
    db.insert(Payload::Min(min_paths));
    db.insert(Payload::XtalkMax(xtalk));
    db.insert(Payload::XtalkMin(xtalk_min));
    db.insert(Payload::Clk(clk));
    db.insert(Payload::Freq(freq));
    db.insert(Payload::Lc(lc));
    db.insert(Payload::Wire(wire));
    Ok((db, truth))
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Splits `total` items over `k` buckets round-robin.
fn spread(total: usize, k: usize) -> Vec<usize> {
    (0..k).map(|j| total / k + usize::from(j < total % k)).collect()
}

struct ClockTree {
    /// Per clock: (net, rise arrival, fall arrival) for root, branches, leaves.
    arrivals: BTreeMap<&'static str, Vec<(String, Fs, Fs)>>,
}

impl ClockTree {
    fn entries(&self, clock: &str) -> Vec<(String, Fs, Fs)> {
        self.arrivals[clock].clone()
    }

    fn rise(&self, clock: &str, net: &str) -> Fs {
        self.arrivals[clock].iter().find(|(n, _, _)| n == net).map(|e| e.1).expect("clock net exists")
    }
}

impl CmBuilder {
    fn clock_tree(&mut self) -> ClockTree {
        let mut arrivals = BTreeMap::new();
        for clock in CLOCKS {
            let mut rows = Vec::new();
            let root = self.rng.gen_range(20_000..=60_000);
            rows.push((format!("clk_tree/{clock}/root"), root, root + self.rng.gen_range(500..=3_000)));
            let mut branches = Vec::new();
            for b in 0..CLOCK_BRANCHES {
                let a = root + self.rng.gen_range(15_000..=40_000);
                branches.push(a);
                rows.push((format!("clk_tree/{clock}/b{b}"), a, a + self.rng.gen_range(500..=3_000)));
            }
            for l in 0..CLOCK_LEAVES {
                let a = branches[l / (CLOCK_LEAVES / CLOCK_BRANCHES)] + self.rng.gen_range(10_000..=30_000);
                rows.push((format!("clk_tree/{clock}/l{l}"), a, a + self.rng.gen_range(500..=3_000)));
            }
            arrivals.insert(clock, rows);
        }
        ClockTree { arrivals }
    }

    fn path_values(&mut self, violating: bool) -> PathValues {
        // Stage counts come from the shared design; sized later by assemble.
        let n = MAX_STAGES;
        PathValues {
            delays: (0..n).map(|_| self.rng.gen_range(5_000..=80_000)).collect(),
            slews: (0..n).map(|_| self.rng.gen_range(2_000..=40_000)).collect(),
            xtalk: vec![0; n],
            slack: if violating { -self.rng.gen_range(5_000..=200_000) } else { self.rng.gen_range(30_000..=400_000) },
            launch_edge: if self.rng.gen_bool(0.7) { ClockEdge::Rise } else { ClockEdge::Fall },
            pbsa: [self.rng.gen_range(-2_000..=2_000), self.rng.gen_range(-2_000..=2_000)],
        }
    }

    /// `count` distinct stage indices in `1..n`, ascending.
    fn pick_stages(&mut self, n: usize, count: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (1..n).collect();
        idx.shuffle(&mut self.rng);
        let mut out: Vec<usize> = idx.into_iter().take(count).collect();
        out.sort_unstable();
        out
    }

    fn new_aggr_name(&mut self, shape: &PathShape) -> String {
        let id = self.next_aggr;
        self.next_aggr += 1;
        format!("u_top/u_blk{}/agg{id}", (shape.block + 1 + id % 7) % 8)
    }

    fn aggressors(&mut self, shape: &PathShape, dominant: bool) -> Vec<Aggressor> {
        let count = self.rng.gen_range(1..=3);
        let mut out = Vec::with_capacity(count);
        if dominant {
            let top = self.rng.gen_range(12_000..=25_000);
            let lead = self.rng.gen_range(0..count);
            for i in 0..count {
                let d = if i == lead { top } else { self.rng.gen_range(500..=top / 2) };
                out.push(Aggressor { net: self.new_aggr_name(shape), coupling_delta: ps(d) });
            }
        } else {
            let mut used = HashSet::new();
            for _ in 0..count {
                let d = loop {
                    let d = self.rng.gen_range(500..=8_000);
                    if used.insert(d) {
                        break d;
                    }
                };
                out.push(Aggressor { net: self.new_aggr_name(shape), coupling_delta: ps(d) });
            }
        }
        out
    }

    fn wire_net(&mut self, net: &str, rc_fs: Fs) -> WireNet {
        let c_milli: i128 = self.rng.gen_range(10_000..=100_000);
        rc::wire_from(net, rc_fs, c_milli)
    }

    fn benign_lc(&mut self, net: &str) -> LcEntry {
        let (kind, vals) = BENIGN_LC[self.rng.gen_range(0..BENIGN_LC.len())];
        LcEntry {
            net: net.to_string(),
            constraint_kind: kind.to_string(),
            value: vals[self.rng.gen_range(0..vals.len())].to_string(),
            unusual: false,
        }
    }
}

fn assemble_path(shape: &PathShape, v: &PathValues, tree: &ClockTree, missing: &HashSet<&str>) -> TimingPath {
    let n = shape.nets.len();
    let mut cumulative: Fs = 0;
    let data_stages: Vec<Stage> = (0..n)
        .map(|j| {
            cumulative += v.delays[j];
            Stage {
                index: j as u32,
                point: shape.points[j].clone(),
                net: shape.nets[j].clone(),
                cell: shape.cells[j].to_string(),
                edge: if j % 2 == 0 { Edge::Rise } else { Edge::Fall },
                delay: ps(v.delays[j]),
                slew: ps(v.slews[j]),
                xtalk_delta: ps(v.xtalk.get(j).copied().unwrap_or(0)),
                cumulative: ps(cumulative),
            }
        })
        .collect();
    let arrival = cumulative;

    let clock = shape.capture_clock;
    let nets = clock_nets(clock, shape.clock_leaf);
    let mut prev = 0;
    let clock_stages: Vec<Stage> = nets
        .iter()
        .enumerate()
        .map(|(j, net)| {
            let at = tree.rise(clock, net);
            let st = Stage {
                index: j as u32,
                point: format!("{net}/Z"),
                net: net.clone(),
                cell: "CLKBUF".into(),
                edge: Edge::Rise,
                delay: ps(at - prev),
                slew: ps(4_000 + 1_000 * j as Fs),
                xtalk_delta: 0.0,
                cumulative: ps(at),
            };
            prev = at;
            st
        })
        .collect();
    let clock_arrival = prev;
    let touches_missing = nets.iter().any(|n| missing.contains(n.as_str()));

    let constraint = arrival + v.slack;
    TimingPath {
        summary: PathSummary {
            path_id: shape.id,
            startpoint: shape.startpoint.clone(),
            endpoint: shape.endpoint.clone(),
            slack: ps(v.slack),
            constraint: ps(constraint),
            arrival: ps(arrival),
            path_group: shape.capture_clock.to_string(),
            internal_external: shape.origin,
        },
        data_info: ArcInfo {
            role: ArcRole::Data,
            pbsa_adjustment: ps(v.pbsa[0]),
            arrival_time: ps(arrival),
            launch_clock: shape.launch_clock.to_string(),
            capture_clock: shape.capture_clock.to_string(),
            clock_edge: v.launch_edge,
        },
        clock_info: ArcInfo {
            role: ArcRole::Clock,
            pbsa_adjustment: ps(v.pbsa[1]),
            arrival_time: ps(clock_arrival),
            launch_clock: shape.launch_clock.to_string(),
            capture_clock: shape.capture_clock.to_string(),
            clock_edge: if touches_missing { ClockEdge::Missing } else { ClockEdge::Rise },
        },
        data_stages,
        clock_stages,
    }
}

#[cfg(test)]
mod tests;
