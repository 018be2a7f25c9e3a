//! Embedding retrieval from the dependency pool.
//!
//! Each pool entry is embedded once (name plus source). A C dependency is
//! embedded the same way and matched by exact cosine search. Matched entries
//! that live inside an impl or trait pull their parent in as well.

use std::collections::BTreeSet;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analyzer::{DependencySet, RepoModel};
use crate::gateway::RetryPolicy;
use crate::pool::{DependencyPool, PoolEntry};

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_THRESHOLD: f64 = 0.35;
pub const DEFAULT_K: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    /// Set when the input text had no tokens.
    pub empty: bool,
}

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            empty: true,
        }
    }

    /// Normalizes `values`; an all-zero input stays zero and is flagged empty.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Self { values, empty: true };
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Self { values, empty: false }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        (dot / denom).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    Transient(String),
    #[error("embedding provider rejected the request: {0}")]
    Fatal(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut v = self.embed_batch(&[text.to_string()])?;
        Ok(v.pop().unwrap_or_else(|| EmbeddingVector::zeros(self.dim())))
    }
}

/// Lowercased word pieces: splits on non-alphanumerics, snake_case and camelCase.
pub fn embedding_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        for i in 1..=chars.len() {
            let boundary = i == chars.len()
                || (chars[i].is_uppercase() && chars[i - 1].is_lowercase())
                || (chars[i].is_ascii_digit() != chars[i - 1].is_ascii_digit())
                || (chars[i].is_uppercase()
                    && chars[i - 1].is_uppercase()
                    && chars.get(i + 1).is_some_and(|c| c.is_lowercase()));
            if boundary {
                if i > start {
                    out.push(chars[start..i].iter().collect::<String>().to_lowercase());
                }
                start = i;
            }
        }
    }
    out
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic bag-of-words embedding: token counts hashed into `dim` buckets.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0.0; self.dim];
        for tok in embedding_tokens(text) {
            values[(fnv1a(tok.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        EmbeddingVector::normalized(values)
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        "hashing"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.par_iter().map(|t| self.embed_text(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbeddingConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub dim: usize,
    pub batch_size: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

/// Batch embedding endpoint: POST `{"model", "input": [..]}`, read `data[i].embedding`.
pub struct RemoteEmbedder {
    config: RemoteEmbeddingConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbeddingConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn post(&self, batch: &[&String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = json!({"model": self.config.model, "input": batch});
        let mut call = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| EmbedError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let msg = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
            return Err(if status == 408 || status == 429 || status >= 500 {
                EmbedError::Transient(msg)
            } else {
                EmbedError::Fatal(msg)
            });
        }
        let mut parsed: EmbeddingResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Fatal(format!("malformed response: {e}")))?;
        if parsed.data.len() != batch.len() {
            return Err(EmbedError::Fatal(format!(
                "{} vectors for {} inputs",
                parsed.data.len(),
                batch.len()
            )));
        }
        parsed.data.sort_by_key(|d| d.index.unwrap_or(0));
        parsed
            .data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.config.dim {
                    return Err(EmbedError::Dimension {
                        expected: self.config.dim,
                        got: d.embedding.len(),
                    });
                }
                Ok(EmbeddingVector::normalized(d.embedding))
            })
            .collect()
    }

    fn post_with_retry(&self, batch: &[&String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut attempt = 0;
        loop {
            match self.post(batch) {
                Err(EmbedError::Transient(msg)) if attempt < self.config.retry.max_retries => {
                    attempt += 1;
                    tracing::warn!(attempt, %msg, "embedding request failed, retrying");
                    std::thread::sleep(self.config.retry.delay(attempt));
                }
                other => return other,
            }
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        "remote"
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out = vec![EmbeddingVector::zeros(self.config.dim); texts.len()];
        let pending: Vec<(usize, &String)> = texts
            .iter()
            .enumerate()
            .filter(|(_, t)| !embedding_tokens(t).is_empty())
            .collect();
        for chunk in pending.chunks(self.config.batch_size.max(1)) {
            let batch: Vec<&String> = chunk.iter().map(|(_, t)| *t).collect();
            for ((i, _), v) in chunk.iter().zip(self.post_with_retry(&batch)?) {
                out[*i] = v;
            }
        }
        Ok(out)
    }
}

/// Text embedded for a pool entry.
pub fn entry_text(entry: &PoolEntry) -> String {
    format!("{}\n{}", entry.name, entry.source)
}

/// Write-once table of pool vectors, ordered by entry id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
}

impl VectorIndex {
    pub fn build(pool: &DependencyPool, provider: &dyn EmbeddingProvider) -> Result<Self, EmbedError> {
        let entries: Vec<&PoolEntry> = pool.entries().collect();
        let texts: Vec<String> = entries.iter().map(|e| entry_text(e)).collect();
        let vectors = provider.embed_batch(&texts)?;
        Ok(Self::from_vectors(
            entries.iter().map(|e| e.id.clone()).zip(vectors).collect(),
        ))
    }

    pub fn from_vectors(mut pairs: Vec<(String, EmbeddingVector)>) -> Self {
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        let (ids, vectors) = pairs.into_iter().unzip();
        Self { ids, vectors }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn covers(&self, pool: &DependencyPool) -> bool {
        self.len() == pool.len() && pool.entries().all(|e| self.ids.binary_search(&e.id).is_ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMatch {
    pub entry_id: String,
    pub score: f64,
}

/// Top `k` entries by cosine similarity, ties by ascending id.
pub fn retrieve(query: &EmbeddingVector, index: &VectorIndex, k: usize) -> Vec<RankedMatch> {
    let mut scored: Vec<RankedMatch> = index
        .ids
        .iter()
        .zip(&index.vectors)
        .map(|(id, v)| RankedMatch {
            entry_id: id.clone(),
            score: cosine(query, v),
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entry_id.cmp(&b.entry_id)));
    scored.truncate(k);
    scored
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DependencyKind {
    /// Called function with no definition in the C repository.
    External,
    Global,
    Record,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DependencyRef {
    pub kind: DependencyKind,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedMatch {
    pub dep: DependencyRef,
    pub entry_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignedContext {
    /// Grouped per dependency, scores descending within a group.
    pub matches: Vec<AlignedMatch>,
    /// Parents of matched entries, first-seen order, no duplicates.
    pub augmented: Vec<String>,
    /// Retrieval fell back to name matching for this unit.
    pub degraded: bool,
}

impl AlignedContext {
    /// Adds the parent of every matched entry not yet listed; returns how many were added.
    pub fn augment(&mut self, pool: &DependencyPool) -> usize {
        let mut seen: BTreeSet<String> = self.augmented.iter().cloned().collect();
        let before = self.augmented.len();
        for m in &self.matches {
            let parent = pool.get(&m.entry_id).and_then(|e| e.parent_id.clone());
            if let Some(p) = parent {
                if seen.insert(p.clone()) {
                    self.augmented.push(p);
                }
            }
        }
        self.augmented.len() - before
    }

    /// Matched and augmented ids, deduplicated, in first-seen order.
    pub fn entry_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.matches
            .iter()
            .map(|m| &m.entry_id)
            .chain(&self.augmented)
            .filter(|id| seen.insert(id.to_string()))
            .cloned()
            .collect()
    }

    /// Best similarity of an entry among matches; augmented-only entries inherit
    /// the best score of their matched children.
    pub fn score_of(&self, entry_id: &str, pool: &DependencyPool) -> f64 {
        let direct = self
            .matches
            .iter()
            .filter(|m| m.entry_id == entry_id)
            .map(|m| m.score)
            .fold(f64::NEG_INFINITY, f64::max);
        if direct.is_finite() {
            return direct;
        }
        self.matches
            .iter()
            .filter(|m| pool.get(&m.entry_id).and_then(|e| e.parent_id.as_deref()) == Some(entry_id))
            .map(|m| m.score)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn augment_parents(matches: Vec<AlignedMatch>, pool: &DependencyPool) -> AlignedContext {
    let mut ctx = AlignedContext {
        matches,
        ..Default::default()
    };
    ctx.augment(pool);
    ctx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignerConfig {
    pub k: usize,
    pub threshold: f64,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Dependency references of a unit with the text used to query the pool.
pub fn dependency_queries(deps: &DependencySet, repo: &RepoModel) -> Vec<(DependencyRef, String)> {
    let mut out = Vec::new();
    for name in &deps.external {
        let decl = repo
            .declarations
            .iter()
            .find(|d| &d.name == name)
            .map(|d| d.text.as_str())
            .unwrap_or_default();
        out.push((
            DependencyRef {
                kind: DependencyKind::External,
                name: name.clone(),
            },
            format!("{name}\n{decl}"),
        ));
    }
    for (kind, snippets) in [
        (DependencyKind::Global, &deps.globals),
        (DependencyKind::Record, &deps.records),
        (DependencyKind::Macro, &deps.macros),
    ] {
        for s in snippets {
            out.push((
                DependencyRef {
                    kind,
                    name: s.name().to_string(),
                },
                format!("{}\n{}", s.name(), s.text),
            ));
        }
    }
    out
}

fn normalized_name(name: &str) -> String {
    embedding_tokens(name.rsplit("::").next().unwrap_or(name)).join("_")
}

pub struct Aligner<'a> {
    pool: &'a DependencyPool,
    provider: &'a dyn EmbeddingProvider,
    index: Option<VectorIndex>,
    config: AlignerConfig,
}

impl<'a> Aligner<'a> {
    /// Embeds the pool. A provider failure leaves the aligner in name-match mode.
    pub fn new(pool: &'a DependencyPool, provider: &'a dyn EmbeddingProvider, config: AlignerConfig) -> Self {
        let index = match VectorIndex::build(pool, provider) {
            Ok(ix) => Some(ix),
            Err(e) => {
                tracing::warn!(error = %e, "pool embedding failed, aligning by name");
                None
            }
        };
        Self {
            pool,
            provider,
            index,
            config,
        }
    }

    pub fn is_degraded(&self) -> bool {
        self.index.is_none()
    }

    pub fn index(&self) -> Option<&VectorIndex> {
        self.index.as_ref()
    }

    pub fn align(&self, deps: &DependencySet, repo: &RepoModel) -> AlignedContext {
        let queries = dependency_queries(deps, repo);
        if queries.is_empty() || self.pool.is_empty() {
            return AlignedContext::default();
        }
        let texts: Vec<String> = queries.iter().map(|(_, t)| t.clone()).collect();
        let embedded = match &self.index {
            Some(_) => self.provider.embed_batch(&texts).map_err(|e| {
                tracing::warn!(unit = %deps.unit_id, error = %e, "query embedding failed, aligning by name");
            }),
            None => Err(()),
        };
        let (matches, degraded) = match (embedded, &self.index) {
            (Ok(vectors), Some(index)) => {
                let mut matches = Vec::new();
                for ((dep, _), v) in queries.iter().zip(&vectors) {
                    for m in retrieve(v, index, self.config.k) {
                        if m.score >= self.config.threshold {
                            matches.push(AlignedMatch {
                                dep: dep.clone(),
                                entry_id: m.entry_id,
                                score: m.score,
                            });
                        }
                    }
                }
                (matches, false)
            }
            _ => (self.name_matches(&queries), true),
        };
        let mut ctx = augment_parents(matches, self.pool);
        ctx.degraded = degraded;
        ctx
    }

    fn name_matches(&self, queries: &[(DependencyRef, String)]) -> Vec<AlignedMatch> {
        let mut out = Vec::new();
        for (dep, _) in queries {
            let wanted = normalized_name(&dep.name);
            out.extend(
                self.pool
                    .entries()
                    .filter(|e| normalized_name(&e.name) == wanted)
                    .take(self.config.k)
                    .map(|e| AlignedMatch {
                        dep: dep.clone(),
                        entry_id: e.id.clone(),
                        score: 1.0,
                    }),
            );
        }
        out
    }
}
