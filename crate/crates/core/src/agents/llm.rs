// SPDX-License-Identifier: Apache-2.0

//! Chat-completions client and prompt assets.

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const API_KEY_ENV: &str = "TIMING_AGENT_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    /// Attempts per expert query and per route plan.
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    /// Attach worked plan examples to the route-planning prompt.
    pub plan_examples: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: String::new(),
            model: "llama3-70b-instruct".into(),
            temperature: 0.3,
            top_p: 1.0,
            max_retries: 3,
            max_in_flight: 4,
            timeout_secs: 120,
            plan_examples: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion: {0}")]
    Malformed(String),
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Chat-completions over HTTP: POST `{model, messages, temperature, top_p}`
/// and read `choices[0].message.content`.
pub struct HttpChatModel {
    config: LlmConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl fmt::Debug for HttpChatModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpChatModel")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<set>"))
            .finish()
    }
}

impl HttpChatModel {
    /// Reads the API key from [`API_KEY_ENV`] when present.
    pub fn from_env(config: LlmConfig) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(config, key)
    }

    pub fn new(config: LlmConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let gate = Gate { free: Mutex::new(config.max_in_flight.max(1)), cv: Condvar::new() };
        Ok(HttpChatModel { config, api_key, client, gate })
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

impl ChatModel for HttpChatModel {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let _slot = self.gate.acquire();
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
            top_p: self.config.top_p,
        };
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transport(e.without_url().to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport(e.without_url().to_string()))?;
        if !status.is_success() {
            let body: String = text.chars().take(500).collect();
            return Err(LlmError::Status { status: status.as_u16(), body });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::Malformed("no choices".into()))
    }
}

pub mod prompts {
    pub const MCMM_PLAN: &str = include_str!("../../prompts/mcmm_plan.txt");
    pub const ROUTE_PLAN: &str = include_str!("../../prompts/route_plan.txt");
    pub const PLAN_EXAMPLES: &str = include_str!("../../prompts/plan_examples.txt");
    pub const EXPERT_QUERY: &str = include_str!("../../prompts/expert_query.txt");
    pub const DSL_GRAMMAR: &str = include_str!("../../prompts/dsl_grammar.txt");
    pub const REPAIR: &str = include_str!("../../prompts/repair.txt");
    pub const FINAL_ANSWER: &str = include_str!("../../prompts/final_answer.txt");

    /// Replaces `{name}` placeholders.
    pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
        let mut out = template.to_string();
        for (k, v) in vars {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out
    }
}

/// Strips a surrounding markdown code fence, if any.
pub fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.split_once('\n').map(|(_, body)| body).unwrap_or("");
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

/// First JSON value embedded in a completion, tolerating prose around it.
pub fn extract_json(text: &str) -> Option<serde_json::Value> {
    let body = strip_fence(text);
    if let Ok(v) = serde_json::from_str(body) {
        return Some(v);
    }
    for (i, c) in body.char_indices() {
        if c == '[' || c == '{' {
            let mut de = serde_json::Deserializer::from_str(&body[i..]).into_iter::<serde_json::Value>();
            if let Some(Ok(v)) = de.next() {
                return Some(v);
            }
        }
    }
    None
}
