// SPDX-License-Identifier: Apache-2.0

mod common;

use std::fs;

use serde_json::{json, Value as Json};
use timing_agent::bench::{build_multi_suite, golden};
use timing_agent::gen::{generate, GenSpec};

use common::*;

#[test]
fn gen_corpus_then_bench_single() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("corpus");
    let db = db.to_str().unwrap();
    let out = run(&["gen-corpus", "--seed", "7", "--paths", "60", "--out", db, "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["manifest"]["seed"], json!(7));
    assert!(dir.path().join("corpus/ground_truth.json").is_file());
    assert!(dir.path().join("corpus/manifest.json").is_file());

    let report = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    let out = run(&["bench", "--suite", "single", "--db", db, "--backend", "scripted", "--out", report.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall pass_rate 100.0%"));
    let r: Json = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["overall"]["total"], json!(90));
    assert!(fs::read_to_string(&csv).unwrap().ends_with("overall,90,90,100.0\n"));
}

#[test]
fn ingest_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("c");
    let db = db.to_str().unwrap();
    assert!(run(&["gen-corpus", "--seed", "3", "--paths", "20", "--corners", "TT", "--modes", "read", "--out", db]).status.success());
    let out = run(&["ingest", "--db", db, "--json"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["manifest"]["row_counts"]["TT_read"]["max"], json!(20));
    assert_eq!(v["diagnostics"], json!([]));

    let out = run(&["query", "--db", db, "--cm", "TT_read", "--json", "from max | filter(summary.slack < 0) | aggregate(count)"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!(v["value"].is_i64() || v["value"].is_object(), "{v}");

    let out = run(&["query", "--db", db, "--cm", "TT_read", "from max | where"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("query error"));
}

#[test]
fn ask_m3_matches_the_scan_golden() {
    let dir = tempfile::tempdir().unwrap();
    let task = write_task(dir.path(), json!({"scope": {"single_corner_mode": "SS_read"}, "task": {"category": "m3", "path": "worst_slack"}}));
    let out = run(&["ask", "--seed", "7", "--task-file", &task, "--backend", "scripted", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["status"], json!("answered"));

    let (corpus, truth) = generate(&GenSpec { seed: 7, ..GenSpec::default() }).unwrap();
    let m3 = build_multi_suite(&corpus, &truth).unwrap().into_iter().find(|c| c.id == "m3").unwrap();
    let got = &v["answer"]["value"];
    assert!(timing_agent::bench::grade(m3.grading, &m3.golden, Some(got)).is_ok(), "{got} vs {}", m3.golden);
    assert!(!m3.golden.as_array().unwrap().is_empty());
    let _ = golden::worst_slack_path;
}

#[test]
fn ask_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let task = write_task(dir.path(), json!({"scope": {"all_modes": {"corner": "FF"}}, "task": {"category": "m8"}}));
    let out = run(&["ask", "--seed", "7", "--task-file", &task, "--json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["status"], json!("failed"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--suite", "multi"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--suite", "multi", "--seed", "1", "--db", "x"]).status.code(), Some(2));
    let out = run(&["bench", "--suite", "multi", "--seed", "7", "--backend", "llm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--endpoint"));
    let dir = tempfile::tempdir().unwrap();
    let task = write_task(dir.path(), json!({"scope": "all_corners_modes", "task": {"category": "nope"}}));
    assert_eq!(run(&["ask", "--seed", "7", "--task-file", &task]).status.code(), Some(2));
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(run(&["tdrg", "show", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn tdrg_show_prints_graph_json() {
    let v = stdout_json(&run(&["tdrg", "show", "--profile", "set4", "--json"]));
    assert_eq!(v["nodes"].as_array().unwrap().len(), 8);
    assert!(v["edges"][0]["from"].is_string() && v["edges"][0]["relation"].is_string());
    let v = stdout_json(&run(&["tdrg", "show", "--profile", "set1", "--json"]));
    assert_eq!(v["edges"], json!([]));
}

#[test]
fn bench_fail_under_and_set1() {
    let out = run(&["bench", "--suite", "multi", "--seed", "7", "--tdrg-profile", "set1", "--fail-under", "50", "--json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["overall"]["pass_rate"], json!(0.0));
    let out = run(&["bench", "--suite", "multi", "--seed", "7", "--fail-under", "90"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn llm_backend_over_http_sends_key_but_never_prints_it() {
    let (url, seen) = fake_endpoint(careful_reply);
    let dir = tempfile::tempdir().unwrap();
    let task = write_task(dir.path(), json!({"scope": {"single_corner_mode": "TT_read"}, "task": {"category": "check_violation", "path_id": 3}}));
    let secret = "sk-test-very-secret-0451";
    let out = bin()
        .args(["ask", "--seed", "7", "--task-file", &task, "--backend", "llm", "--endpoint", &url, "--json"])
        .env("TIMING_AGENT_API_KEY", secret)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "{stdout}\n{stderr}");
    assert!(!stdout.contains(secret) && !stderr.contains(secret));
    let v = stdout_json(&out);
    assert_eq!(v["answer"]["value"], json!("see steps"));
    let s = seen.lock().unwrap();
    assert_eq!(s.prompts.len(), 3);
    assert!(s.authorization.iter().all(|a| a.as_deref() == Some(&format!("Bearer {secret}"))));
}

#[test]
fn endpoint_precedence_is_flag_env_file() {
    let (good, seen) = fake_endpoint(careful_reply);
    let bad = "http://127.0.0.1:9/unreachable";
    let dir = tempfile::tempdir().unwrap();
    let task = write_task(dir.path(), json!({"scope": {"single_corner_mode": "TT_read"}, "task": {"category": "check_violation", "path_id": 3}}));
    let cfg = dir.path().join("cfg.toml");
    let ask = |file_ep: &str, env_ep: Option<&str>, flag_ep: Option<&str>| {
        fs::write(&cfg, format!("[llm]\nendpoint = \"{file_ep}\"\nmax_retries = 1\ntimeout_secs = 5\n")).unwrap();
        let mut c = bin();
        c.args(["ask", "--seed", "7", "--task-file", &task, "--backend", "llm", "--config", cfg.to_str().unwrap()]);
        if let Some(e) = env_ep {
            c.env("TIMING_AGENT_ENDPOINT", e);
        }
        if let Some(f) = flag_ep {
            c.args(["--endpoint", f]);
        }
        c.output().unwrap().status.code()
    };
    assert_eq!(ask(&good, None, None), Some(0));
    assert_eq!(ask(bad, Some(&good), None), Some(0));
    assert_eq!(ask(bad, Some(bad), Some(&good)), Some(0));
    assert_eq!(ask(&good, Some(bad), None), Some(1));
    assert_eq!(ask(&good, Some(&good), Some(bad)), Some(1));
    assert!(seen.lock().unwrap().prompts.len() >= 9);
}

#[test]
fn closed_stdout_pipe_is_not_a_crash() {
    use std::process::Stdio;
    let mut child = bin()
        .args(["tdrg", "show", "--profile", "proposed", "--json"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    drop(child.stdout.take());
    let out = child.wait_with_output().unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(!stderr.contains("panicked"), "{stderr}");
    assert_eq!(out.status.code(), Some(0));
}
