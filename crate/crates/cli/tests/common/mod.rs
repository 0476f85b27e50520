// SPDX-License-Identifier: Apache-2.0

//! Helpers shared by the CLI integration tests: running the binary and a
//! local chat-completions endpoint that answers like a careful model.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value as Json};
use timing_agent::agents::expert::{goals, scripted_dsl};
use timing_agent::model::ReportKind;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_timing-agent"));
    for var in ["TIMING_AGENT_ENDPOINT", "TIMING_AGENT_MODEL", "TIMING_AGENT_API_KEY"] {
        c.env_remove(var);
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn timing-agent")
}

pub fn stdout_json(out: &Output) -> Json {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

pub fn write_task(dir: &Path, task: Json) -> String {
    let p = dir.join("task.json");
    std::fs::write(&p, task.to_string()).unwrap();
    p.display().to_string()
}

/// What the fake endpoint saw.
#[derive(Default)]
pub struct Seen {
    pub authorization: Vec<Option<String>>,
    pub prompts: Vec<String>,
}

/// Replies to the planning, expert and final-answer prompts of a
/// violation check on one path, as a competent model would.
pub fn careful_reply(prompt: &str) -> String {
    if prompt.starts_with("You split timing analysis") {
        return "[\"TT_read\"]".into();
    }
    if prompt.starts_with("You plan which timing reports") {
        let task = prompt.lines().find_map(|l| l.strip_prefix("Task: ")).unwrap_or("");
        let goal = match task.strip_prefix("Check path ").and_then(|t| t.strip_suffix(" for violation")) {
            Some(id) => goals::slack_of(id.parse().unwrap()),
            None => goals::min_slack_path(),
        };
        return json!([{"kind": "max", "goal": goal}]).to_string();
    }
    if prompt.starts_with("You retrieve data") {
        let goal = prompt.lines().find_map(|l| l.strip_prefix("Goal: ")).unwrap_or("");
        let goal = goal.split(" (overall task").next().unwrap();
        return format!("```dsl\n{}\n```", scripted_dsl(goal, ReportKind::Max, &[]).unwrap_or_default());
    }
    if prompt.starts_with("You summarize") {
        return json!({"answer": "see steps", "summary": "done"}).to_string();
    }
    "I do not understand".into()
}

/// Serves chat completions on 127.0.0.1 until the test process exits.
pub fn fake_endpoint(reply: fn(&str) -> String) -> (String, Arc<Mutex<Seen>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Seen::default()));
    let seen2 = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let seen = seen2.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut auth = None;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    if lower.starts_with("authorization:") {
                        auth = Some(line["authorization:".len()..].trim().to_string());
                    }
                }
                let mut body = vec![0; len];
                if reader.read_exact(&mut body).is_err() {
                    return;
                }
                let req: Json = serde_json::from_slice(&body).unwrap_or(Json::Null);
                let prompt = req["messages"].as_array().and_then(|m| m.last()).and_then(|m| m["content"].as_str()).unwrap_or("").to_string();
                let content = reply(&prompt);
                {
                    let mut s = seen.lock().unwrap();
                    s.authorization.push(auth);
                    s.prompts.push(prompt);
                }
                let resp = json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
                    resp.len()
                );
            });
        }
    });
    (url, seen)
}
