//! Blocking client for chat-completions-compatible endpoints.
//!
//! Request: `{model, messages: [{role: "system", content}, {role: "user", content}], temperature}`
//! posted to `{base_url}/chat/completions`. The reply text is the first
//! choice's message content. Status 429, 5xx and transport failures are
//! retried with exponential backoff.

pub mod mock;

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "PROMPTFORGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    /// Maximum concurrent requests.
    pub in_flight: usize,
    pub timeout_secs: f64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_factor: f64,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "worker".into(),
            temperature: 0.0,
            in_flight: 4,
            timeout_secs: 60.0,
            max_attempts: 5,
            backoff_base_ms: 1000,
            backoff_factor: 2.0,
            api_key_env: API_KEY_ENV.into(),
        }
    }
}

impl EndpointConfig {
    /// Delay slept after failed attempt number `attempt` (1-based).
    pub fn backoff_delay(&self, attempt: u32) -> Duration {
        let ms = self.backoff_base_ms as f64
            * self.backoff_factor.powi(attempt.saturating_sub(1) as i32);
        Duration::from_millis(ms.round() as u64)
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, delay: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, delay: Duration) {
        std::thread::sleep(delay);
    }
}

/// Records requested delays instead of sleeping.
#[derive(Default)]
pub struct RecordingSleeper {
    delays: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.delays.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, delay: Duration) {
        self.delays.lock().unwrap().push(delay);
    }
}

struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub usage: Option<Usage>,
    pub attempts: u32,
}

pub struct ChatClient {
    config: EndpointConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    sleeper: Arc<dyn Sleeper>,
    gate: Gate,
}

impl ChatClient {
    /// Reads the API key from the configured environment variable, if set.
    pub fn new(config: EndpointConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001)))
            .build();
        let gate = Gate::new(config.in_flight);
        ChatClient {
            config,
            agent,
            api_key,
            sleeper: Arc::new(ThreadSleeper),
            gate,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn request_body(&self, system: &str, user: &str) -> Value {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
        })
    }

    /// Sends one chat request, honoring the in-flight limit and retry policy.
    pub fn remote_call(&self, system: &str, user: &str) -> Result<ChatReply> {
        let _slot = self.gate.acquire();
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = self.request_body(system, user);
        let max_attempts = self.config.max_attempts.max(1);
        let mut log = Vec::new();

        for attempt in 1..=max_attempts {
            let mut req = self
                .agent
                .post(&url)
                .set("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            let retryable = match req.send_string(&body.to_string()) {
                Ok(resp) => {
                    let raw = resp.into_string().map_err(|e| Error::Environment {
                        message: format!("reading reply body: {e}"),
                        attempts: attempt,
                    })?;
                    return parse_reply(&raw).map(|(text, usage)| ChatReply {
                        text,
                        usage,
                        attempts: attempt,
                    });
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    log.push(format!("attempt {attempt}: status {code}"));
                    if code != 429 && !(500..600).contains(&code) {
                        return Err(Error::Environment {
                            message: format!("{}; body: {text}", log.join("; ")),
                            attempts: attempt,
                        });
                    }
                    true
                }
                Err(ureq::Error::Transport(t)) => {
                    log.push(format!("attempt {attempt}: transport: {t}"));
                    true
                }
            };
            if retryable && attempt < max_attempts {
                self.sleeper.sleep(self.config.backoff_delay(attempt));
            }
        }
        Err(Error::Environment {
            message: log.join("; "),
            attempts: max_attempts,
        })
    }
}

/// Extracts `choices[0].message.content` and optional `usage`.
pub fn parse_reply(raw: &str) -> Result<(String, Option<Usage>)> {
    let parse_err = |message: &str| Error::Parse {
        message: message.into(),
        raw: raw.into(),
    };
    let value: Value =
        serde_json::from_str(raw).map_err(|e| parse_err(&format!("invalid JSON: {e}")))?;
    let text = value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err("missing choices[0].message.content"))?;
    let usage = value
        .get("usage")
        .and_then(|u| serde_json::from_value(u.clone()).ok());
    Ok((text.to_string(), usage))
}
