// SPDX-License-Identifier: Apache-2.0

//! Single- and multi-report benchmark suites, grading and the graph
//! description sensitivity sweep.

pub mod golden;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::agents::{solve, Backend, Mode, PathRef, Scope, Selection, Task, TaskSpec, ATTRIBUTES, COLUMNS};
use crate::gen::GroundTruth;
use crate::model::{CornerMode, Corpus, ReportDb};
use crate::tdrg::{default_graph, Profile, Tdrg};

/// Numbers closer than this compare equal, ps.
pub const TOLERANCE_PS: f64 = 0.01;

pub const CASES_PER_CATEGORY: usize = 10;

pub const SINGLE_CATEGORIES: [&str; 9] = [
    "check_violation",
    "worst_attribute",
    "worst_column",
    "path_origin",
    "slowest_stage",
    "max_xtalk_net",
    "slew_on_net",
    "goes_through_net",
    "data_arc_rising",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grading {
    Exact,
    /// Arrays compare as multisets at every depth; numbers within tolerance.
    SetEquality,
    /// Same shape, numbers within tolerance.
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub id: String,
    pub category: String,
    pub task: Task,
    pub golden: Json,
    pub grading: Grading,
    /// Known to defeat the reference solver; graded like any other case.
    pub expected_hard: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("corpus too small for {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Single,
    Multi,
}

fn nums_eq(a: &Json, b: &Json) -> Option<bool> {
    Some((a.as_f64()? - b.as_f64()?).abs() <= TOLERANCE_PS)
}

fn matches(golden: &Json, got: &Json, unordered: bool) -> bool {
    match (golden, got) {
        (Json::Number(_), Json::Number(_)) => nums_eq(golden, got).unwrap_or(false),
        (Json::Array(a), Json::Array(b)) => {
            if a.len() != b.len() {
                return false;
            }
            if !unordered {
                return a.iter().zip(b).all(|(x, y)| matches(x, y, false));
            }
            let mut used = vec![false; b.len()];
            a.iter().all(|x| {
                let hit = b.iter().enumerate().position(|(j, y)| !used[j] && matches(x, y, true));
                hit.map(|j| used[j] = true).is_some()
            })
        }
        (Json::Object(a), Json::Object(b)) => {
            a.len() == b.len() && a.iter().all(|(k, v)| b.get(k).is_some_and(|w| matches(v, w, unordered)))
        }
        _ => golden == got,
    }
}

/// `Ok` when `got` matches `golden` under `rule`, else a short diff.
pub fn grade(rule: Grading, golden: &Json, got: Option<&Json>) -> Result<(), String> {
    let Some(got) = got else { return Err("no answer".into()) };
    let ok = match rule {
        Grading::Exact => golden == got,
        Grading::SetEquality => matches(golden, got, true),
        Grading::Numeric => matches(golden, got, false),
    };
    if ok {
        Ok(())
    } else {
        let clip = |v: &Json| {
            let s = v.to_string();
            if s.len() > 400 { format!("{}...", &s[..s.char_indices().nth(400).map_or(s.len(), |c| c.0)]) } else { s }
        };
        Err(format!("expected {} got {}", clip(golden), clip(got)))
    }
}

fn insufficient(what: &str) -> BenchError {
    BenchError::InsufficientData(what.to_string())
}

fn case(id: String, category: &str, scope: Scope, spec: TaskSpec, golden: Option<Json>, grading: Grading) -> Result<BenchCase, BenchError> {
    let golden = golden.ok_or_else(|| insufficient(category))?;
    Ok(BenchCase {
        task: Task::new(id.clone(), scope, spec),
        id,
        category: category.to_string(),
        golden,
        grading,
        expected_hard: false,
    })
}

/// Nine categories of ten cases each. Paths, nets and clocks are drawn with
/// a ChaCha8 stream seeded from `seed`; cases rotate over corner/modes.
pub fn build_single_suite(corpus: &Corpus, truth: &GroundTruth, seed: u64) -> Result<Vec<BenchCase>, BenchError> {
    let cms: Vec<&CornerMode> = corpus.corner_modes().collect();
    if cms.is_empty() {
        return Err(insufficient("an empty corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(SINGLE_CATEGORIES.len() * CASES_PER_CATEGORY);
    for (ci, &cat) in SINGLE_CATEGORIES.iter().enumerate() {
        for i in 0..CASES_PER_CATEGORY {
            let cm = cms[(ci + i) % cms.len()];
            let db = corpus.get(cm).expect("listed corner/mode");
            let paths = golden::max_paths(db);
            if paths.is_empty() {
                return Err(insufficient("paths in the max report"));
            }
            let scope = Scope::SingleCornerMode(cm.clone());
            let id = format!("{cat}-{i:02}");
            let any_path = |rng: &mut ChaCha8Rng| paths.choose(rng).expect("non-empty").summary.path_id;
            let c = match cat {
                "check_violation" => {
                    let violating = truth.get(cm).map(|t| t.violating_paths.clone()).unwrap_or_default();
                    // Alternate injected violations with random paths.
                    let pid = if i % 2 == 0 && !violating.is_empty() {
                        violating[(i / 2) % violating.len()]
                    } else {
                        any_path(&mut rng)
                    };
                    case(id, cat, scope, TaskSpec::CheckViolation { path_id: pid }, golden::check_violation(db, pid), Grading::Exact)?
                }
                "worst_attribute" => {
                    let attr = ATTRIBUTES[i % ATTRIBUTES.len()].0;
                    let spec = TaskSpec::WorstAttribute { attribute: attr.into() };
                    case(id, cat, scope, spec, golden::worst_attribute(db, attr), Grading::Numeric)?
                }
                "worst_column" => {
                    let col = COLUMNS[i % COLUMNS.len()];
                    let spec = TaskSpec::WorstColumn { column: col.into() };
                    case(id, cat, scope, spec, golden::worst_column(db, col), Grading::Numeric)?
                }
                "path_origin" => {
                    let pid = any_path(&mut rng);
                    case(id, cat, scope, TaskSpec::PathOrigin { path_id: pid }, golden::path_origin(db, pid), Grading::Exact)?
                }
                "slowest_stage" => {
                    let pid = any_path(&mut rng);
                    case(id, cat, scope, TaskSpec::SlowestStage { path_id: pid }, golden::slowest_stage(db, pid), Grading::Exact)?
                }
                "max_xtalk_net" => {
                    let with: Vec<u64> = truth.get(cm).map(|t| t.worst_xtalk_net.keys().copied().collect()).unwrap_or_default();
                    let pid = *with.choose(&mut rng).ok_or_else(|| insufficient("paths with crosstalk"))?;
                    case(id, cat, scope, TaskSpec::MaxXtalkNet { path_id: pid }, golden::max_xtalk_net(db, pid), Grading::Exact)?
                }
                "slew_on_net" => {
                    let p = paths.choose(&mut rng).expect("non-empty");
                    let s = p.data_stages.choose(&mut rng).ok_or_else(|| insufficient("data stages"))?;
                    let pid = p.summary.path_id;
                    let spec = TaskSpec::SlewOnNet { path_id: pid, net: s.net.clone() };
                    case(id, cat, scope, spec, golden::slew_on_net(db, pid, &s.net), Grading::Numeric)?
                }
                "goes_through_net" => {
                    let p = paths.choose(&mut rng).expect("non-empty");
                    let pid = p.summary.path_id;
                    let net = if i % 2 == 0 {
                        p.data_stages.choose(&mut rng).ok_or_else(|| insufficient("data stages"))?.net.clone()
                    } else {
                        off_path_net(db, pid, &mut rng).ok_or_else(|| insufficient("nets off a path"))?
                    };
                    let g = golden::goes_through(db, pid, &net);
                    case(id, cat, scope, TaskSpec::GoesThroughNet { path_id: pid, net }, g, Grading::Exact)?
                }
                "data_arc_rising" => {
                    let p = paths.choose(&mut rng).expect("non-empty");
                    let pid = p.summary.path_id;
                    let clock = if rng.gen_bool(0.75) {
                        p.data_info.launch_clock.clone()
                    } else {
                        let clocks: BTreeSet<&str> = paths.iter().map(|q| q.data_info.launch_clock.as_str()).collect();
                        clocks.into_iter().collect::<Vec<_>>().choose(&mut rng).expect("non-empty").to_string()
                    };
                    let g = golden::data_arc_rising(db, pid, &clock);
                    case(id, cat, scope, TaskSpec::DataArcRising { path_id: pid, clock }, g, Grading::Exact)?
                }
                _ => unreachable!("listed category"),
            };
            out.push(c);
        }
    }
    Ok(out)
}

/// A data net of some other path that `id` does not go through.
fn off_path_net(db: &ReportDb, id: u64, rng: &mut ChaCha8Rng) -> Option<String> {
    let on: BTreeSet<&str> = golden::path(db, id)?.data_stages.iter().map(|s| s.net.as_str()).collect();
    let off: Vec<&str> = golden::max_paths(db)
        .iter()
        .flat_map(|p| p.data_stages.iter().map(|s| s.net.as_str()))
        .filter(|n| !on.contains(n))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    off.choose(rng).map(|s| s.to_string())
}

/// M1..M10. Single-mode tasks use the first corner/mode; cross-mode tasks
/// span the first corner's modes (M10 spans every corner/mode).
pub fn build_multi_suite(corpus: &Corpus, truth: &GroundTruth) -> Result<Vec<BenchCase>, BenchError> {
    let corners = golden::corners(corpus);
    let (corner, modes) = corners.iter().next().ok_or_else(|| insufficient("an empty corpus"))?;
    let cm = modes[0].clone();
    let db = corpus.get(&cm).expect("listed");
    let all: Vec<CornerMode> = corpus.corner_modes().cloned().collect();
    let thr = truth.rc_threshold_ps;
    let deny = &truth.lc_deny_set;
    let worst = golden::worst_slack_path(db).ok_or_else(|| insufficient("paths in the max report"))?;
    let single = || Scope::SingleCornerMode(cm.clone());
    let by_corner = || Scope::AllModes { corner: corner.clone() };
    let w = PathRef::WorstSlack;
    let set = Grading::SetEquality;

    let selections = m7_selections(db, truth, &cm).ok_or_else(|| insufficient("M7 stage selections"))?;
    let sel_pairs: Vec<(u64, Vec<u32>)> = selections.iter().map(|s| (s.path_id, s.stages.clone())).collect();

    let mut out = vec![
        case("m1".into(), "m1", single(), TaskSpec::M1 { path: w }, golden::missing_clk(db, worst), set)?,
        case("m2".into(), "m2", single(), TaskSpec::M2 { path: w }, golden::m2(db, worst, thr), set)?,
        case("m3".into(), "m3", single(), TaskSpec::M3 { path: w }, golden::m3(db, worst, deny), set)?,
        case("m4".into(), "m4", single(), TaskSpec::M4 { path: w }, golden::m4(db, worst, thr), set)?,
        case("m5".into(), "m5", single(), TaskSpec::M5 { path: w }, golden::m5(db, worst), set)?,
        case("m6".into(), "m6", by_corner(), TaskSpec::M6 { path_id: worst }, golden::m6(corpus, modes, worst), Grading::Numeric)?,
        case("m7".into(), "m7", single(), TaskSpec::M7 { selections }, golden::m7(db, &sel_pairs, thr, deny), set)?,
        case("m8".into(), "m8", by_corner(), TaskSpec::M8, golden::across_modes(corpus, modes, golden::missing_clk), set)?,
        case("m9".into(), "m9", by_corner(), TaskSpec::M9, golden::across_modes(corpus, modes, |d, id| golden::m3(d, id, deny)), set)?,
        case("m10".into(), "m10", Scope::AllCornersModes, TaskSpec::M10, golden::m10(corpus, &all, thr, deny), set)?,
    ];
    out[5].expected_hard = true;
    Ok(out)
}

/// Stage selections around injected RC pairs and dominant-aggressor stages,
/// one per anomaly path, so the M7 golden is never trivially empty.
fn m7_selections(db: &ReportDb, truth: &GroundTruth, cm: &CornerMode) -> Option<Vec<Selection>> {
    let t = truth.get(cm)?;
    let mut out: Vec<Selection> = Vec::new();
    for &pid in &t.anomaly_paths {
        let p = golden::path(db, pid)?;
        let idx = |net: &str| p.data_stages.iter().find(|s| s.net == net).map(|s| s.index);
        let mut stages: BTreeSet<u32> = BTreeSet::new();
        for r in t.rc_mismatch_pairs.iter().filter(|r| r.path_id == pid) {
            stages.extend(idx(&r.a).into_iter().chain(idx(&r.b)));
        }
        stages.extend(t.dominant_pairs.iter().filter(|d| d.path_id == pid).map(|d| d.stage));
        if !stages.is_empty() {
            out.push(Selection { path_id: pid, stages: stages.into_iter().collect() });
        }
    }
    (!out.is_empty()).then_some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub id: String,
    pub category: String,
    pub expected_hard: bool,
    /// Runs whose answer matched the golden.
    pub passed_runs: usize,
    pub runs: usize,
    /// Failure status or grading diff of the first failing run.
    pub diff: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub category: String,
    pub passed: usize,
    pub total: usize,
    pub pass_rate: f64,
}

impl Score {
    fn new(category: &str, passed: usize, total: usize) -> Self {
        let pass_rate = if total == 0 { 0.0 } else { 100.0 * passed as f64 / total as f64 };
        Score { category: category.to_string(), passed, total, pass_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub suite: Suite,
    pub seed: u64,
    pub profile: Profile,
    pub backend: Mode,
    pub runs: usize,
    pub categories: Vec<Score>,
    /// Case-weighted over every run.
    pub overall: Score,
    pub cases: Vec<CaseVerdict>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,passed,total,pass_rate\n");
        for s in self.categories.iter().chain([&self.overall]) {
            let _ = writeln!(out, "{},{},{},{:.1}", s.category, s.passed, s.total, s.pass_rate);
        }
        out
    }
}

/// Grades every case `runs` times. Cases run concurrently; the report is
/// assembled in suite order.
pub fn run_bench(
    suite: Suite,
    cases: &[BenchCase],
    corpus: &Corpus,
    graph: &Tdrg,
    backend: &Backend,
    seed: u64,
    runs: usize,
) -> BenchReport {
    let runs = runs.max(1);
    let verdicts: Vec<CaseVerdict> = cases
        .par_iter()
        .map(|c| {
            let mut passed = 0;
            let mut diff = None;
            for _ in 0..runs {
                let run = solve(&c.task, corpus, graph, backend);
                let outcome = match &run.status {
                    crate::agents::Status::Failed { reason } => Err(format!("failed: {reason}")),
                    crate::agents::Status::Answered => grade(c.grading, &c.golden, run.answer.as_ref().map(|a| &a.value)),
                };
                match outcome {
                    Ok(()) => passed += 1,
                    Err(d) => {
                        diff.get_or_insert(d);
                    }
                }
            }
            CaseVerdict { id: c.id.clone(), category: c.category.clone(), expected_hard: c.expected_hard, passed_runs: passed, runs, diff }
        })
        .collect();

    let mut categories: Vec<Score> = Vec::new();
    for v in &verdicts {
        match categories.iter_mut().find(|s| s.category == v.category) {
            Some(s) => {
                s.passed += v.passed_runs;
                s.total += v.runs;
            }
            None => categories.push(Score::new(&v.category, v.passed_runs, v.runs)),
        }
    }
    for s in &mut categories {
        *s = Score::new(&s.category, s.passed, s.total);
    }
    let passed = verdicts.iter().map(|v| v.passed_runs).sum();
    let total = verdicts.iter().map(|v| v.runs).sum();
    BenchReport {
        suite,
        seed,
        profile: graph.profile,
        backend: backend.mode,
        runs,
        categories,
        overall: Score::new("overall", passed, total),
        cases: verdicts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub profile: Profile,
    pub with_examples: f64,
    pub without_examples: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub seed: u64,
    pub backend: Mode,
    pub runs: usize,
    pub tasks: Vec<String>,
    pub rows: Vec<SensitivityRow>,
}

/// Pass-rate of M1..M5 under every graph profile, with and without worked
/// plan examples in the planning prompt. Examples only change the model
/// prompt, so the scripted columns coincide.
pub fn sensitivity_sweep(
    corpus: &Corpus,
    truth: &GroundTruth,
    backend: &Backend,
    seed: u64,
    runs: usize,
) -> Result<SensitivityReport, BenchError> {
    let cases: Vec<BenchCase> = build_multi_suite(corpus, truth)?.into_iter().take(5).collect();
    let mut rows = Vec::new();
    for p in Profile::ALL {
        let graph = default_graph(p);
        let mut rate = [0.0; 2];
        for (slot, examples) in [(0, true), (1, false)] {
            let mut b = backend.clone();
            b.llm.plan_examples = examples;
            rate[slot] = run_bench(Suite::Multi, &cases, corpus, &graph, &b, seed, runs).overall.pass_rate;
        }
        rows.push(SensitivityRow { profile: p, with_examples: rate[0], without_examples: rate[1] });
    }
    Ok(SensitivityReport { seed, backend: backend.mode, runs, tasks: cases.iter().map(|c| c.id.clone()).collect(), rows })
}
