//! Remote rollout source speaking the chat-completions protocol.
//!
//! Each rollout index becomes one `POST {base_url}/v1/chat/completions`
//! request with `n = 1`, `logprobs = true`, and a per-index sampling seed
//! derived from the stream seed, so batches are reproducible and can run in
//! parallel. Results are reassembled in index order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::search::segment_steps;
use crate::seeding::mix;

use super::{check_answer, whitespace_tokens, Problem, RolloutRecord, RolloutSource, SourceTag};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "AMCS_API_KEY";
/// Environment variable holding the endpoint base URL.
pub const BASE_URL_ENV: &str = "AMCS_BASE_URL";

/// Remote endpoint configuration (the `remote.*` config section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    /// Model name sent with every request. Required for remote runs.
    pub model: String,
    /// Sampling temperature. Non-greedy by default.
    pub temperature: f64,
    pub max_tokens: u32,
    /// Maximum concurrent requests per batch.
    pub max_parallel: usize,
    /// Retries per request on transient failures, with exponential backoff.
    pub max_retries: u32,
    /// Base URL; the `AMCS_BASE_URL` environment variable takes precedence.
    pub base_url: Option<String>,
    /// Step delimiter used to segment completions.
    pub step_delimiter: String,
    /// Per-request timeout in seconds.
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            model: String::new(),
            temperature: 0.7,
            max_tokens: 1024,
            max_parallel: 4,
            max_retries: 3,
            base_url: None,
            step_delimiter: "\n\n".to_string(),
            timeout_secs: 30,
        }
    }
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model.is_empty() {
            return Err(Error::config("remote.model", "must be set for remote runs"));
        }
        if self.temperature < 0.0 {
            return Err(Error::config("remote.temperature", "must be non-negative"));
        }
        if self.max_parallel == 0 {
            return Err(Error::config("remote.max_parallel", "must be at least 1"));
        }
        Ok(())
    }

    fn resolve_base_url(&self) -> Result<String> {
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.is_empty() {
                return Ok(url);
            }
        }
        self.base_url
            .clone()
            .filter(|u| !u.is_empty())
            .ok_or_else(|| {
                Error::Transport(format!(
                    "no endpoint configured: set {BASE_URL_ENV} or remote.base_url"
                ))
            })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<LogprobBlock>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: String,
}

#[derive(Deserialize)]
struct LogprobBlock {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    completion_tokens: Option<u64>,
}

/// Rollout source backed by a chat-completions endpoint.
pub struct RemoteSource {
    config: RemoteConfig,
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteSource {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        config.validate()?;
        let base_url = config.resolve_base_url()?;
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build();
        Ok(RemoteSource {
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            base_url,
            config,
            agent: ureq::Agent::new_with_config(agent_config),
        })
    }

    fn prompt(&self, prefix: &[String], problem: &Problem) -> String {
        let mut text = format!(
            "Solve the following problem step by step. Separate steps with blank \
             lines and end with a line of the form \"The answer is ...\".\n\n\
             Problem: {}",
            problem.statement
        );
        if !prefix.is_empty() {
            text.push_str("\n\nSolution so far:\n\n");
            text.push_str(&prefix.join("\n\n"));
            text.push_str("\n\nContinue from here.");
        }
        text
    }

    fn request_once(&self, body: &serde_json::Value) -> std::result::Result<ChatResponse, (bool, String)> {
        let url = format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(&url).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => resp
                .body_mut()
                .read_json::<ChatResponse>()
                .map_err(|e| (false, format!("malformed response: {e}"))),
            Err(ureq::Error::StatusCode(code)) => {
                let transient = code == 429 || code >= 500;
                Err((transient, format!("http status {code}")))
            }
            Err(e) => Err((true, e.to_string())),
        }
    }

    /// Issue one request with bounded retries and exponential backoff.
    fn request_with_retry(&self, body: &serde_json::Value) -> Result<ChatResponse> {
        let mut attempt = 0u32;
        loop {
            match self.request_once(body) {
                Ok(resp) => return Ok(resp),
                Err((transient, message)) => {
                    if !transient || attempt >= self.config.max_retries {
                        return Err(Error::Transport(format!(
                            "request failed after {attempt} retries: {message}"
                        )));
                    }
                    let backoff = Duration::from_millis(100u64 << attempt.min(6));
                    std::thread::sleep(backoff);
                    attempt += 1;
                }
            }
        }
    }

    fn fetch_one(
        &self,
        prefix: &[String],
        problem: &Problem,
        request_seed: u64,
    ) -> Result<RolloutRecord> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": self.prompt(prefix, problem)}],
            "n": 1,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "logprobs": true,
            "seed": request_seed & 0x7fff_ffff,
        });
        let response = self.request_with_retry(&body)?;
        let choice = response
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Error::Transport("response contained no choices".into()))?;

        let content = choice.message.content;
        let mut steps = segment_steps(&content, &self.config.step_delimiter);
        if steps.is_empty() {
            steps.push(String::new());
        }

        let logprobs: Vec<f64> = choice
            .logprobs
            .map(|b| b.content.iter().map(|t| t.logprob).collect())
            .unwrap_or_default();
        let degraded = logprobs.is_empty();
        let mean_nll = if degraded {
            log::warn!(
                "no log-probabilities returned for problem `{}`; using mean_nll fallback 0.0",
                problem.id
            );
            0.0
        } else {
            (-(logprobs.iter().sum::<f64>()) / logprobs.len() as f64).max(0.0)
        };

        let token_count = if !logprobs.is_empty() {
            logprobs.len()
        } else if let Some(tokens) = response.usage.and_then(|u| u.completion_tokens) {
            tokens as usize
        } else {
            whitespace_tokens(&content)
        }
        .max(1);

        let success = check_answer(steps.last().expect("steps non-empty"), &problem.gold_answer);
        let mut record =
            RolloutRecord::new(steps, token_count, mean_nll, success, SourceTag::Remote)?;
        record.degraded = degraded;
        Ok(record)
    }
}

impl RolloutSource for RemoteSource {
    fn generate_indexed(
        &self,
        prefix: &[String],
        problem: &Problem,
        start: u64,
        count: usize,
        rng_seed: u64,
    ) -> Result<Vec<RolloutRecord>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let results: Mutex<Vec<(usize, Result<RolloutRecord>)>> = Mutex::new(Vec::new());
        let next = AtomicUsize::new(0);
        let workers = self.config.max_parallel.min(count);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= count {
                        break;
                    }
                    let seed = mix(rng_seed, start + i as u64);
                    let record = self.fetch_one(prefix, problem, seed);
                    results.lock().expect("result lock").push((i, record));
                });
            }
        });
        let mut collected = results.into_inner().expect("result lock");
        collected.sort_by_key(|(i, _)| *i);
        collected.into_iter().map(|(_, r)| r).collect()
    }

    fn tag(&self) -> SourceTag {
        SourceTag::Remote
    }
}
