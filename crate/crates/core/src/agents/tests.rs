// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use serde_json::{json, Value as Json};

use super::expert::{goals, scripted_dsl};
use super::*;
use crate::gen::{generate, GenSpec, GroundTruth};
use crate::model::{Corpus, Edge, ReportKind};
use crate::tdrg::{default_graph, Profile};

fn fixture() -> &'static (Corpus, GroundTruth) {
    static F: OnceLock<(Corpus, GroundTruth)> = OnceLock::new();
    F.get_or_init(|| generate(&GenSpec { paths_per_report: 60, ..GenSpec::default() }).unwrap())
}

fn tt_read() -> CornerMode {
    "TT_read".parse().unwrap()
}

fn solve_on(scope: Scope, spec: TaskSpec, profile: Profile, backend: &Backend) -> TaskRun {
    let (corpus, _) = fixture();
    solve(&Task::new("t", scope, spec), corpus, &default_graph(profile), backend)
}

fn scripted(spec: TaskSpec) -> TaskRun {
    let run = solve_on(Scope::SingleCornerMode(tt_read()), spec, Profile::Proposed, &Backend::scripted());
    assert!(run.answered(), "{:?}", run.status);
    assert!(citations_resolve(&run));
    replay(&run, &fixture().0).unwrap();
    run
}

fn value(run: &TaskRun) -> &Json {
    &run.answer.as_ref().unwrap().value
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

#[test]
fn m1_finds_every_injected_missing_clock_edge() {
    let (corpus, truth) = fixture();
    let t = truth.get(&tt_read()).unwrap();
    let path = corpus.get(&tt_read()).unwrap().path_by_id(ReportKind::Max, t.worst_slack_path).unwrap();
    let run = scripted(TaskSpec::M1 { path: PathRef::WorstSlack });
    let got: Vec<String> = value(&run).as_array().unwrap().iter().map(|i| format!("{}/{}/{}", i["clock"], i["net"], i["missing"])).collect();
    let want: Vec<String> = t
        .missing_clk
        .iter()
        .filter(|m| path.clock_stages.iter().any(|s| s.net == m.net))
        .map(|m| {
            let edges: Vec<&str> = m.missing.iter().map(|e| if *e == Edge::Rise { "rise" } else { "fall" }).collect();
            format!("{}/{}/{}", json!(m.clock), json!(m.net), json!(edges))
        })
        .collect();
    assert_eq!(sorted(got), sorted(want));
}

#[test]
fn m2_matches_injected_rc_pairs_on_worst_path() {
    let (_, truth) = fixture();
    let t = truth.get(&tt_read()).unwrap();
    let run = scripted(TaskSpec::M2 { path: PathRef::WorstSlack });
    let got: Vec<String> = value(&run).as_array().unwrap().iter().map(|i| format!("{}-{}", i["a"], i["b"])).collect();
    let want: Vec<String> = t
        .rc_mismatch_pairs
        .iter()
        .filter(|p| p.path_id == t.worst_slack_path)
        .map(|p| format!("{}-{}", json!(p.a), json!(p.b)))
        .collect();
    assert!(!want.is_empty());
    assert_eq!(sorted(got), sorted(want));
}

#[test]
fn m3_reports_the_injected_unusual_constraints() {
    let (_, truth) = fixture();
    let t = truth.get(&tt_read()).unwrap();
    let run = scripted(TaskSpec::M3 { path: PathRef::WorstSlack });
    let got: BTreeSet<String> = value(&run).as_array().unwrap().iter().map(|i| format!("{}:{}", i["net"], i["constraint_kind"])).collect();
    let want: BTreeSet<String> = t
        .unusual_lc
        .iter()
        .filter(|u| u.path_id == t.worst_slack_path)
        .map(|u| format!("{}:{}", json!(u.net), json!(u.constraint_kind)))
        .collect();
    assert_eq!(got, want);
}

#[test]
fn m4_flags_victim_aggressor_rc_mismatch() {
    let (_, truth) = fixture();
    let t = truth.get(&tt_read()).unwrap();
    let run = scripted(TaskSpec::M4 { path: PathRef::WorstSlack });
    let got: BTreeSet<String> = value(&run).as_array().unwrap().iter().map(|i| format!("{}>{}", i["victim"], i["aggressor"])).collect();
    let want: BTreeSet<String> = t
        .aggressor_rc_mismatch
        .iter()
        .filter(|p| p.path_id == t.worst_slack_path)
        .map(|p| format!("{}>{}", json!(p.victim), json!(p.aggressor)))
        .collect();
    assert_eq!(got, want);
    assert_eq!(run.transcripts[0].plan.as_ref().unwrap().kinds(), vec![ReportKind::Max, ReportKind::XtalkMax, ReportKind::Wire, ReportKind::Lc]);
}

#[test]
fn m5_and_m6_answer_shapes() {
    let run = scripted(TaskSpec::M5 { path: PathRef::WorstSlack });
    assert!(value(&run)["net"].is_string());
    assert!(value(&run)["constraints"].is_array());

    let (_, truth) = fixture();
    let id = truth.get(&tt_read()).unwrap().worst_slack_path;
    let run = solve_on(Scope::AllModes { corner: "TT".into() }, TaskSpec::M6 { path_id: id }, Profile::Proposed, &Backend::scripted());
    assert!(run.answered(), "{:?}", run.status);
    assert_eq!(run.mcmm_plan.len(), 3);
    let v = value(&run);
    assert_eq!(v["stage_counts"].as_object().unwrap().len(), 3);
    assert!(v["points_consistent"].is_boolean());
    assert!(citations_resolve(&run));
}

#[test]
fn cross_mode_tasks_tag_items_with_corner_mode() {
    let (_, truth) = fixture();
    let run = solve_on(Scope::AllModes { corner: "SS".into() }, TaskSpec::M8, Profile::Proposed, &Backend::scripted());
    assert!(run.answered(), "{:?}", run.status);
    let items = value(&run).as_array().unwrap();
    let want: usize = run
        .mcmm_plan
        .iter()
        .map(|cm| {
            let t = truth.get(cm).unwrap();
            let path = fixture().0.get(cm).unwrap().path_by_id(ReportKind::Max, t.worst_slack_path).unwrap();
            t.missing_clk.iter().filter(|m| path.clock_stages.iter().any(|s| s.net == m.net)).count()
        })
        .sum();
    assert!(want > 0);
    assert_eq!(items.len(), want);
    assert!(items.iter().all(|i| i["corner_mode"].as_str().unwrap().starts_with("SS_")));
    assert!(citations_resolve(&run));

    let run = solve_on(Scope::AllCornersModes, TaskSpec::M10, Profile::Proposed, &Backend::scripted());
    assert!(run.answered(), "{:?}", run.status);
    assert_eq!(run.transcripts.len(), 6);
    assert!(value(&run)["rc_pairs"].as_array().unwrap().len() >= 6);
    assert!(citations_resolve(&run));
    replay(&run, &fixture().0).unwrap();
}

#[test]
fn m7_limits_pairs_to_selected_stages() {
    let (corpus, truth) = fixture();
    let t = truth.get(&tt_read()).unwrap();
    let pair = t.rc_mismatch_pairs.iter().find(|p| p.path_id == t.worst_slack_path).unwrap();
    let db = corpus.get(&tt_read()).unwrap();
    let path = db.path_by_id(ReportKind::Max, pair.path_id).unwrap();
    let idx = path.data_stages.iter().find(|s| s.net == pair.a).unwrap().index;
    let sel = vec![Selection { path_id: pair.path_id, stages: vec![idx, idx + 1] }];
    let run = scripted(TaskSpec::M7 { selections: sel });
    let pairs = value(&run)["rc_pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0]["a"], json!(pair.a));
    assert!((pairs[0]["mismatch"].as_f64().unwrap() - pair.mismatch).abs() < 0.01);
}

#[test]
fn single_report_answers_match_direct_lookups() {
    let (corpus, truth) = fixture();
    let t = truth.get(&tt_read()).unwrap();
    let db = corpus.get(&tt_read()).unwrap();
    let bad = t.violating_paths[0];
    assert_eq!(value(&scripted(TaskSpec::CheckViolation { path_id: bad })), &json!(true));
    let run = scripted(TaskSpec::WorstAttribute { attribute: "slack".into() });
    assert_eq!(value(&run)["path_id"], json!(t.worst_slack_path));
    let (&pid, net) = t.worst_xtalk_net.iter().next().unwrap();
    assert_eq!(value(&scripted(TaskSpec::MaxXtalkNet { path_id: pid })), &json!(net));
    let path = db.path_by_id(ReportKind::Max, pid).unwrap();
    let stage = &path.data_stages[1];
    let slew = value(&scripted(TaskSpec::SlewOnNet { path_id: pid, net: stage.net.clone() })).as_f64().unwrap();
    assert!((slew - stage.slew).abs() < 0.01);
    assert_eq!(value(&scripted(TaskSpec::GoesThroughNet { path_id: pid, net: stage.net.clone() })), &json!(true));
    assert_eq!(value(&scripted(TaskSpec::GoesThroughNet { path_id: pid, net: "no/such/net".into() })), &json!(false));
}

#[test]
fn unknown_path_fails_the_step() {
    let run = solve_on(Scope::SingleCornerMode(tt_read()), TaskSpec::M2 { path: PathRef::Id(999_999) }, Profile::Proposed, &Backend::scripted());
    match &run.status {
        Status::Failed { reason } => assert!(reason.contains("step 1 failed"), "{reason}"),
        s => panic!("{s:?}"),
    }
}

#[test]
fn scope_errors_and_uninformative_graph() {
    let run = solve_on(Scope::AllModes { corner: "FF".into() }, TaskSpec::M8, Profile::Proposed, &Backend::scripted());
    assert!(matches!(&run.status, Status::Failed { reason } if reason.contains("corner FF")));
    let run = solve_on(Scope::SingleCornerMode(tt_read()), TaskSpec::M1 { path: PathRef::WorstSlack }, Profile::Set1, &Backend::scripted());
    assert!(matches!(&run.status, Status::Failed { reason } if reason.contains("no valid retrieval plan")));
    let run = solve_on(Scope::SingleCornerMode(tt_read()), TaskSpec::SlowestStage { path_id: 1 }, Profile::Set2, &Backend::scripted());
    assert!(!matches!(&run.status, Status::Failed { reason } if reason.contains("plan")));
}

/// Chat model driven by a closure, counting calls.
struct Fake<F> {
    reply: F,
    calls: AtomicUsize,
    seen: Mutex<Vec<String>>,
}

impl<F: Fn(&str) -> String + Send + Sync> ChatModel for Fake<F> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let last = &messages.last().unwrap().content;
        self.seen.lock().unwrap().push(last.clone());
        Ok((self.reply)(last))
    }
}

fn fake<F: Fn(&str) -> String + Send + Sync + 'static>(f: F) -> Arc<Fake<F>> {
    Arc::new(Fake { reply: f, calls: AtomicUsize::new(0), seen: Mutex::new(Vec::new()) })
}

/// Replies like a competent model: routes from the prompt's task, queries
/// via the scripted templates, answers with the last result.
fn competent(prompt: &str) -> String {
    if prompt.starts_with("You plan which timing reports") {
        let task = prompt.lines().find_map(|l| l.strip_prefix("Task: Check path ")).unwrap();
        let id = task.trim_end_matches(" for violation");
        return json!([{"kind": "max", "goal": goals::slack_of(id.parse().unwrap())}]).to_string();
    }
    if prompt.starts_with("You retrieve data") {
        let goal = prompt.lines().find_map(|l| l.strip_prefix("Goal: ")).unwrap();
        let goal = goal.split(" (overall task").next().unwrap();
        return format!("```\n{}\n```", scripted_dsl(goal, ReportKind::Max, &[]).unwrap());
    }
    if prompt.starts_with("You summarize") {
        return "Here you go: {\"answer\": true, \"summary\": \"slack is negative\"}".into();
    }
    "?".into()
}

#[test]
fn llm_backend_runs_plan_query_and_answer() {
    let (_, truth) = fixture();
    let bad = truth.get(&tt_read()).unwrap().violating_paths[0];
    let model = fake(competent);
    let backend = Backend::llm(LlmConfig::default(), model.clone());
    let run = solve_on(Scope::SingleCornerMode(tt_read()), TaskSpec::CheckViolation { path_id: bad }, Profile::Proposed, &backend);
    assert!(run.answered(), "{:?}", run.status);
    assert_eq!(value(&run), &json!(true));
    assert_eq!(model.calls.load(Ordering::SeqCst), 3);
    assert!(citations_resolve(&run));
    replay(&run, &fixture().0).unwrap();
}

#[test]
fn llm_query_repair_then_exhaustion() {
    let (_, truth) = fixture();
    let bad = truth.get(&tt_read()).unwrap().violating_paths[0];
    // First query is invalid, the repaired one is fine.
    let n = Arc::new(AtomicUsize::new(0));
    let n2 = n.clone();
    let model = fake(move |p: &str| {
        if p.starts_with("That query failed") && n2.fetch_add(1, Ordering::SeqCst) == 0 {
            return scripted_dsl(&goals::slack_of(bad), ReportKind::Max, &[]).unwrap();
        }
        if p.starts_with("You retrieve data") {
            return "from max | where".into();
        }
        competent(p)
    });
    let backend = Backend::llm(LlmConfig::default(), model.clone());
    let run = solve_on(Scope::SingleCornerMode(tt_read()), TaskSpec::CheckViolation { path_id: bad }, Profile::Proposed, &backend);
    assert!(run.answered(), "{:?}", run.status);
    let q = &run.transcripts[0].steps[0].queries[0];
    assert_eq!(q.attempts.len(), 2);
    assert!(q.attempts[0].error.is_some());

    let model = fake(|p: &str| if p.starts_with("You plan") { competent(p) } else { "from wire | top 1".into() });
    let backend = Backend::llm(LlmConfig::default(), model.clone());
    let run = solve_on(Scope::SingleCornerMode(tt_read()), TaskSpec::CheckViolation { path_id: bad }, Profile::Proposed, &backend);
    match &run.status {
        Status::Failed { reason } => assert!(reason.contains("after 3 attempts"), "{reason}"),
        s => panic!("{s:?}"),
    }
}

#[test]
fn llm_plans_are_validated_against_the_graph() {
    // Proposes a clk step straight after lc, which no edge allows.
    let model = fake(|_: &str| json!([{"kind": "lc", "goal": "x"}, {"kind": "clk", "goal": "y"}]).to_string());
    let backend = Backend::llm(LlmConfig::default(), model.clone());
    let run = solve_on(Scope::SingleCornerMode(tt_read()), TaskSpec::M1 { path: PathRef::WorstSlack }, Profile::Proposed, &backend);
    assert!(matches!(&run.status, Status::Failed { reason } if reason.contains("no valid retrieval plan")));
    assert_eq!(model.calls.load(Ordering::SeqCst), 3);
    assert!(model.seen.lock().unwrap()[1].starts_with("That query failed"));
}

#[test]
fn llm_mcmm_plan_falls_back_on_bad_output() {
    let (corpus, _) = fixture();
    let task = Task::new("t", Scope::AllModes { corner: "TT".into() }, TaskSpec::M8);
    let narrow = Backend::llm(LlmConfig::default(), fake(|_: &str| "[\"TT_scan\"]".into()));
    assert_eq!(mcmm_plan(&task, corpus, &narrow).unwrap(), vec!["TT_scan".parse::<CornerMode>().unwrap()]);
    for reply in ["nonsense", "[\"SS_read\"]", "[]"] {
        let b = Backend::llm(LlmConfig::default(), fake(move |_: &str| reply.into()));
        assert_eq!(mcmm_plan(&task, corpus, &b).unwrap().len(), 3, "{reply}");
    }
}

#[test]
fn malformed_final_answer_fails_closed() {
    let (_, truth) = fixture();
    let bad = truth.get(&tt_read()).unwrap().violating_paths[0];
    let model = fake(|p: &str| if p.starts_with("You summarize") { "the answer is yes".into() } else { competent(p) });
    let backend = Backend::llm(LlmConfig::default(), model);
    let run = solve_on(Scope::SingleCornerMode(tt_read()), TaskSpec::CheckViolation { path_id: bad }, Profile::Proposed, &backend);
    assert!(matches!(&run.status, Status::Failed { reason } if reason.contains("malformed")));
    assert!(run.answer.is_none());
}

#[test]
fn http_model_debug_hides_key() {
    let m = HttpChatModel::new(LlmConfig::default(), Some("sk-secret-123".into())).unwrap();
    let text = format!("{m:?}");
    assert!(!text.contains("sk-secret-123"));
    assert!(text.contains("<set>"));
}
