//! Chat-completion style HTTP backend.
//!
//! One POST per request with a system message carrying the task instruction
//! and a single user message carrying the tagged prompt. The response is read
//! from `choices[0].message.content`; `usage` is optional.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, Completion, CompletionBackend, CompletionRequest, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub timeout: Duration,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }
}

pub(crate) fn classify_status(status: u16, body: &str) -> BackendError {
    let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
    if status == 408 || status == 429 || status >= 500 {
        BackendError::Transient(msg)
    } else {
        BackendError::Fatal(msg)
    }
}

impl CompletionBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn uses_network(&self) -> bool {
        true
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let prompt = request.serialized_prompt();
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.task.instruction()},
                {"role": "user", "content": prompt},
            ],
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_tokens,
        });
        let mut call = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let started = Instant::now();
        let mut response = call
            .send_json(&body)
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        if status != 200 {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Err(classify_status(status, &text));
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Fatal(format!("malformed response: {e}")))?;
        let latency = started.elapsed();
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Fatal("response has no choices".into()))?;
        let text = choice.message.content.unwrap_or_default();
        let usage = match parsed.usage {
            Some(u) if u.prompt_tokens + u.completion_tokens > 0 => Usage {
                prompt_tokens: u.prompt_tokens,
                output_tokens: u.completion_tokens,
                estimated: false,
            },
            _ => Usage::estimate(&prompt, &text),
        };
        Ok(Completion {
            text,
            finish_reason: choice.finish_reason.unwrap_or_else(|| "unknown".into()),
            usage,
            latency: latency.max(Duration::from_nanos(1)),
        })
    }
}
