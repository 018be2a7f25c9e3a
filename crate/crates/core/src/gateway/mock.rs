//! Scripted backend for hermetic runs.
//!
//! A script is an ordered list of records. For each request the backend
//! increments the call ordinal for `(unit, task)` and answers with the first
//! record whose filters all match:
//!
//! ```toml
//! [[response]]
//! task = "REPAIR"                  # required
//! unit = "src/buf.c::buf_push"     # optional, exact unit id
//! ordinal = 2                      # optional, 1-based call count for (unit, task)
//! contains = "E0425"               # optional, substring of the serialized prompt
//! text = "```rust\nfn f() {}\n```" # the completion
//! # fail = "transient"             # or "fatal": answer with an error instead
//! ```
//!
//! A request no record matches fails with a fatal backend error.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, Completion, CompletionBackend, CompletionRequest, TaskTag, Usage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedFailure {
    Transient,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub task: TaskTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<ScriptedFailure>,
}

impl ScriptEntry {
    pub fn reply(task: TaskTag, text: impl Into<String>) -> Self {
        Self {
            task,
            unit: None,
            ordinal: None,
            contains: None,
            text: text.into(),
            fail: None,
        }
    }

    pub fn for_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    pub fn at_ordinal(mut self, ordinal: u32) -> Self {
        self.ordinal = Some(ordinal);
        self
    }

    pub fn when_contains(mut self, needle: impl Into<String>) -> Self {
        self.contains = Some(needle.into());
        self
    }

    pub fn failing(mut self, failure: ScriptedFailure) -> Self {
        self.fail = Some(failure);
        self
    }

    fn matches(&self, request: &CompletionRequest, ordinal: u32, prompt: &str) -> bool {
        self.task == request.task
            && self
                .unit
                .as_ref()
                .is_none_or(|u| request.unit_id.as_deref() == Some(u.as_str()))
            && self.ordinal.is_none_or(|o| o == ordinal)
            && self.contains.as_ref().is_none_or(|c| prompt.contains(c.as_str()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default, rename = "response")]
    pub entries: Vec<ScriptEntry>,
}

impl MockScript {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("mock script: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("script serializes")
    }
}

pub struct MockBackend {
    script: MockScript,
    ordinals: Mutex<HashMap<(Option<String>, TaskTag), u32>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            ordinals: Mutex::new(HashMap::new()),
        }
    }
}

impl CompletionBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn uses_network(&self) -> bool {
        false
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let ordinal = {
            let mut ordinals = self.ordinals.lock().expect("ordinals poisoned");
            let n = ordinals.entry((request.unit_id.clone(), request.task)).or_insert(0);
            *n += 1;
            *n
        };
        let prompt = request.serialized_prompt();
        let entry = self
            .script
            .entries
            .iter()
            .find(|e| e.matches(request, ordinal, &prompt))
            .ok_or_else(|| {
                BackendError::Fatal(format!(
                    "no scripted response for {} call #{} of {}",
                    request.task,
                    ordinal,
                    request.unit_id.as_deref().unwrap_or("<no unit>")
                ))
            })?;
        match entry.fail {
            Some(ScriptedFailure::Transient) => Err(BackendError::Transient("scripted transient failure".into())),
            Some(ScriptedFailure::Fatal) => Err(BackendError::Fatal("scripted failure".into())),
            None => Ok(Completion {
                text: entry.text.clone(),
                finish_reason: "stop".into(),
                usage: Usage::estimate(&prompt, &entry.text),
                latency: Duration::ZERO,
            }),
        }
    }
}
