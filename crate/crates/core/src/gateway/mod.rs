//! Uniform completion interface over a remote chat endpoint or a scripted mock.
//!
//! Every request is serialized with its task tag as the first line of the
//! prompt (`[TRANSLATE]`, `[DETECT]`, `[REPAIR]`, `[BRIDGE]`, `[CONSISTENCY]`),
//! so backends and scripts can route on it.

mod mock;
pub(crate) mod remote;

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::tokens::estimate_tokens;

pub use mock::{MockBackend, MockScript, ScriptEntry, ScriptedFailure};
pub use remote::{RemoteBackend, RemoteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskTag {
    Translate,
    Detect,
    Repair,
    Bridge,
    Consistency,
}

impl TaskTag {
    pub const ALL: [TaskTag; 5] = [
        TaskTag::Translate,
        TaskTag::Detect,
        TaskTag::Repair,
        TaskTag::Bridge,
        TaskTag::Consistency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskTag::Translate => "TRANSLATE",
            TaskTag::Detect => "DETECT",
            TaskTag::Repair => "REPAIR",
            TaskTag::Bridge => "BRIDGE",
            TaskTag::Consistency => "CONSISTENCY",
        }
    }

    /// The literal prefix line, e.g. `[REPAIR]`.
    pub fn literal(self) -> String {
        format!("[{}]", self.as_str())
    }

    /// System instruction sent alongside the prompt by chat backends.
    pub fn instruction(self) -> &'static str {
        match self {
            TaskTag::Translate => {
                "Translate the given C function into safe, idiomatic Rust. Reply with one Rust code block."
            }
            TaskTag::Detect => "Inspect the given Rust code and list its syntax or type errors.",
            TaskTag::Repair => {
                "Repair the given Rust code so that it compiles and matches the C source. Reply with one Rust code block."
            }
            TaskTag::Bridge => {
                "Write a short docstring that maps the C function's logic to idiomatic Rust intent."
            }
            TaskTag::Consistency => {
                "Compare the C source with its Rust translation. Reply CONSISTENT, or one line per discrepancy starting with MISMATCH:."
            }
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().trim_start_matches('[').trim_end_matches(']');
        Self::ALL.into_iter().find(|t| t.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    /// Nucleus (top-p) probability mass.
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    /// Greedy decoding: temperature 0, top-p 1, at most 4096 output tokens.
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub task: TaskTag,
    /// Unit the request is made for; scripts count calls per unit and task.
    pub unit_id: Option<String>,
    pub prompt: String,
    pub params: DecodingParams,
}

impl CompletionRequest {
    pub fn new(task: TaskTag, unit_id: Option<&str>, prompt: impl Into<String>) -> Self {
        Self {
            task,
            unit_id: unit_id.map(str::to_string),
            prompt: prompt.into(),
            params: DecodingParams::default(),
        }
    }

    /// Prompt text as sent to the backend: tag line, then the prompt.
    pub fn serialized_prompt(&self) -> String {
        format!("{}\n{}", self.task.literal(), self.prompt)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    /// True when counts come from the local estimator rather than the backend.
    pub estimated: bool,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.output_tokens
    }

    pub fn estimate(prompt: &str, output: &str) -> Self {
        Self {
            prompt_tokens: estimate_tokens(prompt) as u64,
            output_tokens: estimate_tokens(output) as u64,
            estimated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: String,
    pub usage: Usage,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx responses.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("backend rejected request: {0}")]
    Rejected(String),
    #[error("empty request prompt")]
    EmptyPrompt,
    #[error("completion contained no code")]
    EmptyCompletion,
}

pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Whether calls leave the process.
    fn uses_network(&self) -> bool;

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Exponential backoff before retry `n` (1-based), capped at `max_delay`.
    pub fn delay(&self, n: u32) -> Duration {
        let factor = 1u32.checked_shl(n.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// One entry of the gateway's request log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub task: TaskTag,
    pub unit_id: Option<String>,
    pub backend: String,
    pub network: bool,
    pub attempts: u32,
    pub ok: bool,
}

struct Limiter {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("limiter poisoned");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// Shareable front door to a backend: bounded concurrency, bounded retries,
/// and a log of every request.
pub struct Gateway {
    backend: Box<dyn CompletionBackend>,
    retry: RetryPolicy,
    limiter: Limiter,
    log: Mutex<Vec<RequestRecord>>,
}

impl Gateway {
    pub fn new(backend: Box<dyn CompletionBackend>, retry: RetryPolicy, max_in_flight: usize) -> Self {
        Self {
            backend,
            retry,
            limiter: Limiter::new(max_in_flight),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn mock(script: MockScript) -> Self {
        Self::new(Box::new(MockBackend::new(script)), RetryPolicy::none(), 1)
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<Completion, GatewayError> {
        if request.prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let _permit = self.limiter.acquire();
        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            match self.backend.complete(request) {
                Ok(mut completion) => {
                    if completion.usage.total() == 0 {
                        completion.usage = Usage::estimate(&request.serialized_prompt(), &completion.text);
                    }
                    break Ok(completion);
                }
                Err(BackendError::Fatal(msg)) => break Err(GatewayError::Rejected(msg)),
                Err(BackendError::Transient(msg)) => {
                    if attempts > self.retry.max_retries {
                        break Err(GatewayError::Unavailable { attempts, last: msg });
                    }
                    let delay = self.retry.delay(attempts);
                    tracing::debug!(task = %request.task, attempts, ?delay, "retrying completion");
                    std::thread::sleep(delay);
                }
            }
        };
        self.log.lock().expect("log poisoned").push(RequestRecord {
            task: request.task,
            unit_id: request.unit_id.clone(),
            backend: self.backend.name().to_string(),
            network: self.backend.uses_network(),
            attempts,
            ok: result.is_ok(),
        });
        result
    }

    pub fn requests(&self) -> Vec<RequestRecord> {
        self.log.lock().expect("log poisoned").clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().expect("log poisoned").len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionPath {
    Fenced,
    Bare,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedCode {
    pub code: String,
    pub path: ExtractionPath,
}

/// Returns the body of the first fenced code block, or the whole text trimmed
/// when there is no complete fence.
pub fn extract_code_block(text: &str) -> Result<ExtractedCode, GatewayError> {
    if text.trim().is_empty() {
        return Err(GatewayError::EmptyCompletion);
    }
    if let Some(open) = text.find("```") {
        let after = &text[open + 3..];
        // The info string (e.g. `rust`) runs to the end of the opening line.
        if let Some(nl) = after.find('\n') {
            let body = &after[nl + 1..];
            if let Some(close) = body.find("```") {
                let code = body[..close].trim_end_matches(['\n', '\r']).to_string();
                if code.trim().is_empty() {
                    return Err(GatewayError::EmptyCompletion);
                }
                return Ok(ExtractedCode {
                    code,
                    path: ExtractionPath::Fenced,
                });
            }
        }
    }
    Ok(ExtractedCode {
        code: text.trim().to_string(),
        path: ExtractionPath::Bare,
    })
}
