//! Per-unit prompt context.
//!
//! Small dependencies go into the prompt verbatim, large ones as one-line
//! summaries. Prior translations of direct callees at lower levels are always
//! included. When the estimate exceeds the budget, aligned pool entries are
//! dropped first (lowest similarity, then entry id), then C dependencies from
//! the end of the list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::align::AlignedContext;
use crate::analyzer::{DependencySet, FunctionUnit, NamedSnippet, SnippetKind, TranslationOrder};
use crate::error::{Error, Result};
use crate::gateway::{CompletionRequest, Gateway, TaskTag};
use crate::pool::{Category, DependencyPool, PoolEntry};
use crate::templates::{render, TemplateSet};
use crate::tokens::estimate_tokens;

pub const DEFAULT_VERBATIM_THRESHOLD: usize = 400;
pub const DEFAULT_CONTEXT_BUDGET: usize = 12_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextConfig {
    /// Largest dependency, in estimated tokens, that is shown verbatim.
    pub verbatim_threshold: usize,
    pub budget: usize,
    /// Every C dependency verbatim, no pool retrieval.
    pub plain_deps: bool,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            verbatim_threshold: DEFAULT_VERBATIM_THRESHOLD,
            budget: DEFAULT_CONTEXT_BUDGET,
            plain_deps: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepOrigin {
    C,
    Pool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDep {
    pub name: String,
    pub origin: DepOrigin,
    pub label: String,
    pub entry_id: Option<String>,
    pub score: Option<f64>,
    /// Source text for verbatim dependencies, docstring for summaries.
    pub text: String,
    /// Estimated size of the rendered block.
    pub tokens: usize,
}

impl ContextDep {
    fn render(&self) -> String {
        format!("[{}]\n{}\n", self.label, self.text.trim_end())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredTranslation {
    pub code: String,
    /// False when the best attempt still failed to compile.
    pub verified: bool,
}

/// Final translations of finished units, keyed by unit id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationStore {
    units: BTreeMap<String, StoredTranslation>,
}

impl TranslationStore {
    pub fn insert(&mut self, unit_id: impl Into<String>, code: impl Into<String>, verified: bool) {
        self.units.insert(
            unit_id.into(),
            StoredTranslation {
                code: code.into(),
                verified,
            },
        );
    }

    pub fn get(&self, unit_id: &str) -> Option<&StoredTranslation> {
        self.units.get(unit_id)
    }

    pub fn contains(&self, unit_id: &str) -> bool {
        self.units.contains_key(unit_id)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &StoredTranslation)> {
        self.units.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorTranslation {
    pub unit_id: String,
    pub level: usize,
    pub code: String,
    pub verified: bool,
}

impl PriorTranslation {
    fn render(&self) -> String {
        let flag = if self.verified { "" } else { ", unverified" };
        format!("[{}{}]\n{}\n", self.unit_id, flag, self.code.trim_end())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeDoc {
    pub text: String,
    /// Set when the gateway failed and the mechanical docstring was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub unit_id: String,
    pub source: String,
    pub bridge_docstring: String,
    pub bridge_fallback: bool,
    pub verbatim_deps: Vec<ContextDep>,
    pub summarized_deps: Vec<ContextDep>,
    pub prior_translations: Vec<PriorTranslation>,
    /// Labels of dependencies dropped to fit the budget, in drop order.
    pub dropped: Vec<String>,
    pub token_estimate: usize,
}

impl PromptContext {
    pub fn render_deps(&self) -> String {
        if self.verbatim_deps.is_empty() && self.summarized_deps.is_empty() {
            return "(none)".into();
        }
        self.verbatim_deps
            .iter()
            .chain(&self.summarized_deps)
            .map(ContextDep::render)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn render_prior(&self) -> String {
        if self.prior_translations.is_empty() {
            return "(none)".into();
        }
        self.prior_translations
            .iter()
            .map(PriorTranslation::render)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn translate_prompt(&self, templates: &TemplateSet) -> String {
        render(
            &templates.translate,
            &[
                ("BRIDGE", &self.bridge_docstring),
                ("DEPS", &self.render_deps()),
                ("PRIOR", &self.render_prior()),
                ("SOURCE", &self.source),
            ],
        )
    }
}

fn snippet_kind(kind: SnippetKind) -> &'static str {
    match kind {
        SnippetKind::Global => "global",
        SnippetKind::Struct => "struct",
        SnippetKind::Union => "union",
        SnippetKind::Enum => "enum",
        SnippetKind::Typedef => "typedef",
        SnippetKind::Macro => "macro",
    }
}

fn c_dep(s: &NamedSnippet, config: &ContextConfig) -> (ContextDep, bool) {
    let kind = snippet_kind(s.kind);
    let verbatim = config.plain_deps || estimate_tokens(&s.text) <= config.verbatim_threshold;
    let (label, text) = if verbatim {
        (format!("C {kind} {}", s.name()), s.text.clone())
    } else {
        let head: String = s
            .text
            .split(['{', '\n'])
            .next()
            .unwrap_or_default()
            .trim()
            .chars()
            .take(120)
            .collect();
        let mut text = format!("{head} ... ({} in {})", kind, s.file);
        if s.names.len() > 1 {
            text.push_str(&format!("; declares {}", s.names[1..].join(", ")));
        }
        (format!("C {kind} {}, summary", s.name()), text)
    };
    let mut dep = ContextDep {
        name: s.name().to_string(),
        origin: DepOrigin::C,
        label,
        entry_id: None,
        score: None,
        text,
        tokens: 0,
    };
    dep.tokens = estimate_tokens(&dep.render());
    (dep, verbatim)
}

/// One-line description from the entry's kind and member names.
pub fn mechanical_summary(entry: &PoolEntry) -> String {
    let members = entry.members.join(", ");
    let what = match entry.category {
        Category::Struct => "fields",
        Category::Enum => "variants",
        Category::Function => "parameters",
        Category::Trait | Category::Impl => "members",
        _ => "",
    };
    if what.is_empty() || members.is_empty() {
        format!("{} {}", entry.category, entry.name)
    } else {
        format!("{} {} ({what}: {members})", entry.category, entry.name)
    }
}

fn pool_dep(entry: &PoolEntry, score: f64, config: &ContextConfig) -> (ContextDep, bool) {
    let verbatim = estimate_tokens(&entry.source) <= config.verbatim_threshold;
    let (label, text) = if verbatim {
        (
            format!(
                "Rust {} {}, {}, similarity {:.3}",
                entry.category, entry.name, entry.id, score
            ),
            entry.source.clone(),
        )
    } else {
        let text = entry.doc.clone().unwrap_or_else(|| mechanical_summary(entry));
        (
            format!(
                "Rust {} {}, {}, summary, similarity {:.3}",
                entry.category, entry.name, entry.id, score
            ),
            text,
        )
    };
    let mut dep = ContextDep {
        name: entry.name.clone(),
        origin: DepOrigin::Pool,
        label,
        entry_id: Some(entry.id.clone()),
        score: Some(score),
        text,
        tokens: 0,
    };
    dep.tokens = estimate_tokens(&dep.render());
    (dep, verbatim)
}

#[allow(clippy::too_many_arguments)]
pub fn build_context(
    unit: &FunctionUnit,
    deps: &DependencySet,
    aligned: &AlignedContext,
    pool: &DependencyPool,
    order: &TranslationOrder,
    store: &TranslationStore,
    bridge: &BridgeDoc,
    config: &ContextConfig,
) -> Result<PromptContext> {
    let level = order
        .level_of(&unit.id)
        .ok_or_else(|| Error::UnknownUnit(unit.id.clone()))?;

    let mut priors = Vec::new();
    for callee in &deps.callees {
        let callee_level = order
            .level_of(callee)
            .ok_or_else(|| Error::UnknownUnit(callee.clone()))?;
        if callee_level >= level {
            // Same component: compiled against stubs, not shown as prior work.
            continue;
        }
        let stored = store.get(callee).ok_or_else(|| Error::OrderingViolation {
            unit: unit.id.clone(),
            callee: callee.clone(),
        })?;
        priors.push(PriorTranslation {
            unit_id: callee.clone(),
            level: callee_level,
            code: stored.code.clone(),
            verified: stored.verified,
        });
    }

    // (dep, verbatim) in presentation order: C records, globals, macros, then pool entries.
    let mut items: Vec<(ContextDep, bool)> = deps
        .records
        .iter()
        .chain(&deps.globals)
        .chain(&deps.macros)
        .map(|s| c_dep(s, config))
        .collect();
    if !config.plain_deps {
        for id in aligned.entry_ids() {
            match pool.get(&id) {
                Some(entry) => items.push(pool_dep(entry, aligned.score_of(&id, pool), config)),
                None => tracing::warn!(unit = %unit.id, entry = %id, "aligned entry missing from pool"),
            }
        }
    }

    let fixed = estimate_tokens(&unit.source)
        + estimate_tokens(&bridge.text)
        + priors.iter().map(|p| estimate_tokens(&p.render())).sum::<usize>();
    if fixed > config.budget {
        return Err(Error::BudgetExceeded {
            unit: unit.id.clone(),
            needed: fixed,
            budget: config.budget,
        });
    }
    let mut total = fixed + items.iter().map(|(d, _)| d.tokens).sum::<usize>();
    let mut dropped = Vec::new();
    while total > config.budget {
        let victim = items
            .iter()
            .enumerate()
            .filter(|(_, (d, _))| d.origin == DepOrigin::Pool)
            .min_by(|(_, (a, _)), (_, (b, _))| {
                a.score
                    .unwrap_or(0.0)
                    .total_cmp(&b.score.unwrap_or(0.0))
                    .then_with(|| a.entry_id.cmp(&b.entry_id))
            })
            .map(|(i, _)| i)
            .or_else(|| items.len().checked_sub(1));
        let Some(i) = victim else { break };
        let (dep, _) = items.remove(i);
        total -= dep.tokens;
        dropped.push(dep.label);
    }

    let (verbatim, summarized): (Vec<_>, Vec<_>) = items.into_iter().partition(|(_, v)| *v);
    Ok(PromptContext {
        unit_id: unit.id.clone(),
        source: unit.source.clone(),
        bridge_docstring: bridge.text.clone(),
        bridge_fallback: bridge.fallback,
        verbatim_deps: verbatim.into_iter().map(|(d, _)| d).collect(),
        summarized_deps: summarized.into_iter().map(|(d, _)| d).collect(),
        prior_translations: priors,
        dropped,
        token_estimate: total,
    })
}

pub fn fallback_docstring(unit: &FunctionUnit) -> String {
    let calls = if unit.refs.calls.is_empty() {
        "none".to_string()
    } else {
        unit.refs.calls.join(", ")
    };
    format!("Signature: {}\nCalls: {calls}", unit.signature.trim())
}

pub fn bridge_prompt(unit: &FunctionUnit, templates: &TemplateSet) -> String {
    render(
        &templates.bridge,
        &[("SOURCE", &unit.source), ("SIGNATURE", &unit.signature)],
    )
}

/// Asks the gateway for an intent docstring; any failure yields the
/// mechanical fallback, flagged.
pub fn request_bridge_docstring(unit: &FunctionUnit, gateway: &Gateway, templates: &TemplateSet) -> BridgeDoc {
    let request = CompletionRequest::new(TaskTag::Bridge, Some(&unit.id), bridge_prompt(unit, templates));
    match gateway.complete(&request) {
        Ok(c) if !c.text.trim().is_empty() => BridgeDoc {
            text: c.text,
            fallback: false,
        },
        Ok(_) => {
            tracing::warn!(unit = %unit.id, "empty bridge docstring, using fallback");
            BridgeDoc {
                text: fallback_docstring(unit),
                fallback: true,
            }
        }
        Err(e) => {
            tracing::warn!(unit = %unit.id, error = %e, "bridge docstring request failed, using fallback");
            BridgeDoc {
                text: fallback_docstring(unit),
                fallback: true,
            }
        }
    }
}
