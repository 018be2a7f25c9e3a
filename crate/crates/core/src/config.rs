//! Run configuration: a TOML file with sections, overridable field by field.
//!
//! Precedence is command line, then environment (endpoint and API key),
//! then file, then defaults.
//!
//! ```toml
//! c_root = "legacy/"
//! pool_root = "rewrite/"
//! output_dir = "runs/first"
//! jobs = 4
//!
//! [backend]
//! kind = "mock"            # or "remote"
//! mock_script = "script.toml"
//!
//! [budgets]
//! compile_iters = 3
//! consistency_iters = 2
//! candidates = 1
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::align::{AlignerConfig, RemoteEmbeddingConfig, DEFAULT_DIM, DEFAULT_K, DEFAULT_THRESHOLD};
use crate::context::{ContextConfig, DEFAULT_CONTEXT_BUDGET, DEFAULT_VERBATIM_THRESHOLD};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, MockBackend, MockScript, RemoteBackend, RemoteConfig, RetryPolicy};
use crate::refiner::{Budgets, RefineConfig, Toolchain};

pub const ENV_ENDPOINT: &str = "CROSSWALK_ENDPOINT";
pub const ENV_API_KEY: &str = "CROSSWALK_API_KEY";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub mock_script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            mock_script: None,
            endpoint: None,
            model: "default".into(),
            timeout_secs: 120,
            max_retries: 3,
            api_key: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub dim: usize,
    pub batch_size: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::Hashing,
            endpoint: None,
            model: "default".into(),
            dim: DEFAULT_DIM,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Cosine floor for pool retrieval.
    pub similarity: f64,
    /// Pool entries retrieved per dependency.
    pub top_k: usize,
    pub verbatim_tokens: usize,
    pub context_budget: usize,
    /// Skip pool retrieval and show C dependencies only.
    pub plain_deps: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            similarity: DEFAULT_THRESHOLD,
            top_k: DEFAULT_K,
            verbatim_tokens: DEFAULT_VERBATIM_THRESHOLD,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            plain_deps: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    /// Sampling temperature when several candidates are drawn.
    pub candidate_temperature: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            candidate_temperature: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolchainConfig {
    pub rustc: PathBuf,
    pub timeout_secs: u64,
    pub edition: String,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        let t = Toolchain::default();
        Self {
            rustc: t.rustc,
            timeout_secs: t.timeout.as_secs(),
            edition: t.edition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Benchmark name used in reports; defaults to the C root's directory name.
    pub name: Option<String>,
    pub c_root: Option<PathBuf>,
    pub pool_root: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub keep_artifacts: bool,
    pub backend: BackendConfig,
    pub embedding: EmbeddingConfig,
    pub budgets: Budgets,
    pub thresholds: Thresholds,
    pub weights: Weights,
    pub toolchain: ToolchainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: None,
            c_root: None,
            pool_root: None,
            output_dir: PathBuf::from("crosswalk-run"),
            jobs: 1,
            keep_artifacts: false,
            backend: BackendConfig::default(),
            embedding: EmbeddingConfig::default(),
            budgets: Budgets::default(),
            thresholds: Thresholds::default(),
            weights: Weights::default(),
            toolchain: ToolchainConfig::default(),
        }
    }
}

/// Command-line values; `None` leaves the file or default value alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub c_root: Option<PathBuf>,
    pub pool_root: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub mock_script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub compile_iters: Option<u32>,
    pub consistency_iters: Option<u32>,
    pub candidates: Option<u32>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub plain_deps: Option<bool>,
    pub keep_artifacts: Option<bool>,
    pub jobs: Option<usize>,
    pub rustc: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            config.c_root.as_mut().map(fix);
            config.pool_root.as_mut().map(fix);
            config.backend.mock_script.as_mut().map(fix);
            fix(&mut config.output_dir);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Defaults, then `file`, then environment, then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Ok(endpoint) = std::env::var(ENV_ENDPOINT) {
            if !endpoint.is_empty() {
                config.backend.endpoint = Some(endpoint);
            }
        }
        config.backend.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        config.apply(overrides);
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        if o.c_root.is_some() {
            self.c_root = o.c_root.clone();
        }
        if o.pool_root.is_some() {
            self.pool_root = o.pool_root.clone();
        }
        if o.mock_script.is_some() {
            self.backend.mock_script = o.mock_script.clone();
        }
        if o.endpoint.is_some() {
            self.backend.endpoint = o.endpoint.clone();
        }
        set!(self.output_dir, o.output_dir);
        set!(self.backend.kind, o.backend);
        set!(self.budgets.compile_iters, o.compile_iters);
        set!(self.budgets.consistency_iters, o.consistency_iters);
        set!(self.budgets.candidates, o.candidates);
        set!(self.weights.alpha, o.alpha);
        set!(self.weights.beta, o.beta);
        set!(self.thresholds.plain_deps, o.plain_deps);
        set!(self.keep_artifacts, o.keep_artifacts);
        set!(self.jobs, o.jobs);
        set!(self.toolchain.rustc, o.rustc);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.budgets.candidates < 1 {
            return bad("candidates must be at least 1".into());
        }
        let (a, b) = (self.weights.alpha, self.weights.beta);
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 {
            return bad(format!(
                "weights must be finite and non-negative, got alpha={a} beta={b}"
            ));
        }
        if a == 0.0 && b == 0.0 {
            return bad("alpha and beta are both zero".into());
        }
        if !(-1.0..=1.0).contains(&self.thresholds.similarity) {
            return bad(format!(
                "similarity threshold {} outside [-1, 1]",
                self.thresholds.similarity
            ));
        }
        if self.thresholds.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if self.embedding.dim == 0 {
            return bad("embedding dim must be positive".into());
        }
        match self.backend.kind {
            BackendKind::Mock if self.backend.mock_script.is_none() => {
                return bad("mock backend needs a mock script".into());
            }
            BackendKind::Remote if self.backend.endpoint.is_none() => {
                return bad(format!("remote backend needs an endpoint (set {ENV_ENDPOINT})"));
            }
            _ => {}
        }
        if self.embedding.kind == EmbeddingKind::Remote && self.embedding.endpoint.is_none() {
            return bad("remote embeddings need an endpoint".into());
        }
        Ok(())
    }

    pub fn c_root(&self) -> Result<&Path> {
        self.c_root
            .as_deref()
            .ok_or_else(|| Error::Config("no C root given".into()))
    }

    pub fn run_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.c_root
                .as_deref()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into())
        })
    }

    pub fn toolchain(&self) -> Toolchain {
        Toolchain {
            rustc: self.toolchain.rustc.clone(),
            timeout: Duration::from_secs(self.toolchain.timeout_secs),
            edition: self.toolchain.edition.clone(),
        }
    }

    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig {
            budgets: self.budgets,
            alpha: self.weights.alpha,
            beta: self.weights.beta,
            candidate_temperature: self.weights.candidate_temperature,
            keep_artifacts: self.keep_artifacts,
        }
    }

    pub fn context_config(&self) -> ContextConfig {
        ContextConfig {
            verbatim_threshold: self.thresholds.verbatim_tokens,
            budget: self.thresholds.context_budget,
            plain_deps: self.thresholds.plain_deps,
        }
    }

    pub fn aligner_config(&self) -> AlignerConfig {
        AlignerConfig {
            k: self.thresholds.top_k,
            threshold: self.thresholds.similarity,
        }
    }

    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.backend.max_retries,
            ..RetryPolicy::default()
        }
    }

    pub fn remote_embedding(&self) -> Option<RemoteEmbeddingConfig> {
        (self.embedding.kind == EmbeddingKind::Remote).then(|| RemoteEmbeddingConfig {
            endpoint: self.embedding.endpoint.clone().unwrap_or_default(),
            model: self.embedding.model.clone(),
            api_key: self.backend.api_key.clone(),
            dim: self.embedding.dim,
            batch_size: self.embedding.batch_size.max(1),
            timeout: Duration::from_secs(self.backend.timeout_secs),
            retry: self.retry(),
        })
    }

    pub fn gateway(&self) -> Result<Gateway> {
        let backend: Box<dyn crate::gateway::CompletionBackend> =
            match self.backend.kind {
                BackendKind::Mock => {
                    let path = self
                        .backend
                        .mock_script
                        .as_deref()
                        .ok_or_else(|| Error::Config("mock backend needs a mock script".into()))?;
                    Box::new(MockBackend::new(MockScript::load(path)?))
                }
                BackendKind::Remote => Box::new(RemoteBackend::new(RemoteConfig {
                    endpoint: self.backend.endpoint.clone().ok_or_else(|| {
                        Error::Config(format!("remote backend needs an endpoint (set {ENV_ENDPOINT})"))
                    })?,
                    model: self.backend.model.clone(),
                    api_key: self.backend.api_key.clone(),
                    timeout: Duration::from_secs(self.backend.timeout_secs),
                })),
            };
        let retry = match self.backend.kind {
            BackendKind::Mock => RetryPolicy::none(),
            BackendKind::Remote => self.retry(),
        };
        Ok(Gateway::new(backend, retry, self.jobs))
    }
}
