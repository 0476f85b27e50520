// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gen::{generate, GenSpec, GroundTruth};
use crate::model::Corpus;

fn corpus(seed: u64, paths: usize) -> (Corpus, GroundTruth) {
    generate(&GenSpec { seed, paths_per_report: paths, ..GenSpec::default() }).unwrap()
}

fn first_db(c: &Corpus) -> &ReportDb {
    c.databases.values().next().unwrap()
}

#[test]
fn minimum_slack_path_matches_truth() {
    let (c, truth) = corpus(3, 60);
    for (cm, db) in &c.databases {
        let r = run("from max | min_by(summary.slack) | get(summary.path_id)", db).unwrap();
        assert_eq!(r.value, Value::Int(truth.get(cm).unwrap().worst_slack_path as i64));
        assert_eq!(r.provenance.kind, ReportKind::Max);
        assert_eq!(r.provenance.rows.len(), 1);
        assert_eq!(&r.provenance.corner_mode, cm);
    }
}

#[test]
fn violating_count_and_ids_match_truth() {
    let (c, truth) = corpus(5, 80);
    for (cm, db) in &c.databases {
        let t = truth.get(cm).unwrap();
        let n = run("from max | filter(summary.slack < 0) | aggregate(count)", db).unwrap();
        assert_eq!(n.value, Value::Int(t.violating_paths.len() as i64));
        let ids = run("from max | filter(summary.slack < 0) | sort_by(summary.path_id) | get(summary.path_id)", db).unwrap();
        let want: Vec<Value> = t.violating_paths.iter().map(|&i| Value::Int(i as i64)).collect();
        assert_eq!(ids.value, Value::List(want));
        assert_eq!(ids.provenance.rows.len(), t.violating_paths.len());
    }
}

#[test]
fn sub_table_rows_carry_owner_index() {
    let (c, _) = corpus(1, 20);
    let db = first_db(&c);
    let pid = db.paths(ReportKind::Max).unwrap()[3].summary.path_id;
    let q = format!("from max.data_stages | filter(path_id = {pid} and index = 1) | map(net as n)");
    let r = run(&q, db).unwrap();
    let Value::List(rows) = &r.value else { panic!("{:?}", r.value) };
    assert_eq!(rows.len(), 1);
    assert_eq!(r.provenance.table.as_deref(), Some("data_stages"));
    let id = r.provenance.rows[0];
    let path = &db.paths(ReportKind::Max).unwrap()[id.row];
    assert_eq!(path.summary.path_id, pid);
    let net = &path.data_stages[id.sub.unwrap()].net;
    assert_eq!(rows[0].field("n").and_then(Value::as_str), Some(net.as_str()));
}

#[test]
fn trailing_pipe_is_a_syntax_error_at_end() {
    let q = "from max | top(3) |";
    match parse_query(q) {
        Err(QueryError::Syntax { position, .. }) => assert_eq!(position, q.len()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_field_is_a_type_error_at_its_stage() {
    match parse_query("from wire | get(summary.slack)") {
        Err(QueryError::Type { stage, .. }) => assert_eq!(stage, 1),
        other => panic!("{other:?}"),
    }
    match parse_query("from max | top(2) | aggregate(sum, summary.startpoint)") {
        Err(QueryError::Type { stage, .. }) => assert_eq!(stage, 2),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_query("from wire.aggressors"), Err(QueryError::Syntax { position: 10, .. })));
}

#[test]
fn absent_kind_is_reported() {
    let (c, _) = corpus(1, 10);
    let mut db = first_db(&c).clone();
    let cm = db.corner_mode.clone();
    db = {
        let mut fresh = ReportDb::new(cm);
        for p in db.payloads().filter(|p| p.kind() != ReportKind::Lc) {
            fresh.insert(p.clone());
        }
        fresh
    };
    let prog = parse_query("from lc | aggregate(count)").unwrap();
    let want = Err(QueryError::KindAbsent(ReportKind::Lc));
    assert_eq!(execute(&prog, &db, &SandboxBudget::default()), want);
    assert_eq!(oracle_execute(&prog, &db, &SandboxBudget::default()), want);
}

#[test]
fn budgets_are_enforced_identically() {
    let (c, _) = corpus(2, 50);
    let db = first_db(&c);
    let prog = parse_query("from max | sort_by(summary.slack) | top(10)").unwrap();
    let tight = SandboxBudget { max_steps: 40, ..SandboxBudget::default() };
    let a = execute(&prog, db, &tight);
    assert!(matches!(a, Err(QueryError::BudgetExceeded(_))), "{a:?}");
    assert_eq!(a, oracle_execute(&prog, db, &tight));

    let rows = SandboxBudget { max_result_rows: 5, ..SandboxBudget::default() };
    let b = execute(&prog, db, &rows);
    assert!(matches!(b, Err(QueryError::BudgetExceeded(_))), "{b:?}");
    assert_eq!(b, oracle_execute(&prog, db, &rows));
    assert!(execute(&parse_query("from max | top(5)").unwrap(), db, &rows).is_ok());
}

#[test]
fn empty_input_errors_in_both_implementations() {
    let (c, _) = corpus(2, 20);
    let db = first_db(&c);
    for q in [
        "from max | filter(summary.slack > 1e9) | min_by(summary.slack)",
        "from wire | filter(net = \"nope\") | aggregate(avg, worst_rc)",
        "from wire | top(0) | get(worst_rc) | aggregate(max)",
    ] {
        let prog = parse_query(q).unwrap();
        let a = execute(&prog, db, &SandboxBudget::default());
        assert!(matches!(a, Err(QueryError::EmptyInput { .. })), "{q}: {a:?}");
        assert_eq!(a, oracle_execute(&prog, db, &SandboxBudget::default()), "{q}");
    }
    let sum = run("from wire | filter(net = \"nope\") | aggregate(sum, worst_rc)", db).unwrap();
    assert_eq!(sum.value, Value::Num(0.0));
    assert!(sum.provenance.rows.is_empty());
}

#[test]
fn top_larger_than_input_returns_everything() {
    let (c, _) = corpus(2, 15);
    let db = first_db(&c);
    let r = run("from max | top(1000) | aggregate(count)", db).unwrap();
    assert_eq!(r.value, Value::Int(db.paths(ReportKind::Max).unwrap().len() as i64));
}

#[test]
fn sort_is_stable_with_nulls_last() {
    let (c, _) = corpus(4, 30);
    let db = first_db(&c);
    let r = run("from xtalk_max | sort_by(worst_aggressor, desc) | get(path_id)", db).unwrap();
    let o = oracle_execute(
        &parse_query("from xtalk_max | sort_by(worst_aggressor, desc) | get(path_id)").unwrap(),
        db,
        &SandboxBudget::default(),
    )
    .unwrap();
    assert_eq!(r, o);
}

#[test]
fn display_round_trips() {
    for q in [
        "from max | filter((summary.slack < -0.5 and not summary.startpoint prefix \"u_top\") or summary.path_id in [1, 2, 3]) | sort_by(summary.slack, desc) | top(3) | map(summary.path_id as id, summary.slack)",
        "from xtalk_max | filter(any(aggressors, coupling_delta >= 2.5) and worst_aggressor is not null) | group_by(victim) | aggregate(count)",
        "from lc | filter(net glob \"u_top/*/net?\" and value contains \"a\\\"b\") | get(net)",
        "from freq | max_by(mhz) | get(clock)",
        "from max.clock_stages | filter(delay \u{2265} 1e-3) | aggregate(sum, delay)",
    ] {
        let p = parse_query(q).unwrap();
        let text = p.to_string();
        let again = parse_query(&text).unwrap();
        assert_eq!(again.to_string(), text, "{q}");
    }
}

#[test]
fn glob_matches_regex_translation_on_net_names() {
    let names = ["u_top/u_blk0/net12", "u_top/u_blk1/agg3", "clk_tree/CLK_A/l7", "", "a*b", "??"];
    let pats = ["*", "u_top/*", "*/net?", "*net1?", "clk_tree/*/l?", "", "a*b", "??", "?", "*?*"];
    for p in pats {
        let re = oracle::glob_regex(p);
        for n in names {
            assert_eq!(exec::glob_match(p, n), re.is_match(n), "{p} vs {n}");
        }
    }
}

proptest! {
    #[test]
    fn lexer_and_checker_never_panic(s in "\\PC{0,80}") {
        let _ = parse_query(&s);
    }

    #[test]
    fn query_shaped_noise_never_panics(parts in prop::collection::vec(
        prop::sample::select(vec![
            "from", "max", "wire", "|", "filter", "(", ")", "[", "]", ",", ".", "summary", "slack",
            "<", "=", "!=", "-1.5", "3", "\"x\"", "and", "not", "in", "is", "null", "any", "top", "get",
            "aggregate", "count", "group_by", "map", "as", "sort_by", "desc", "min_by", "data_stages",
        ]), 0..24)) {
        let _ = parse_query(&parts.join(" "));
    }

    #[test]
    fn glob_agrees_with_regex(p in "[ab*?]{0,6}", t in "[ab]{0,8}") {
        prop_assert_eq!(exec::glob_match(&p, &t), oracle::glob_regex(&p).is_match(&t));
    }
}

#[test]
fn executor_matches_oracle_on_random_programs() {
    let mut checked = 0usize;
    let mut errors = 0usize;
    for seed in 0..5u64 {
        let (c, _) = corpus(seed, 40);
        let dbs: Vec<&ReportDb> = c.databases.values().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..1000 {
            let db = dbs[i % dbs.len()];
            let text = random::random_program(&mut rng, db);
            let prog = parse_query(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
            let budget = if i % 17 == 0 {
                SandboxBudget { max_steps: 60, max_result_rows: 8 }
            } else {
                SandboxBudget::default()
            };
            let a = execute(&prog, db, &budget);
            let b = oracle_execute(&prog, db, &budget);
            assert_eq!(a, b, "seed {seed} #{i}: {text}");
            errors += a.is_err() as usize;
            checked += 1;
        }
    }
    assert_eq!(checked, 5000);
    assert!(errors < checked / 2, "{errors} of {checked} programs errored");
}
