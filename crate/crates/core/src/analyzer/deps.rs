//! Per-function dependency sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::graph::CallGraph;
use super::parse::{NamedSnippet, RepoModel};
use crate::error::{Error, Result};

/// Everything one function needs from the rest of the repository.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencySet {
    pub unit_id: String,
    /// Ids of repo functions called directly, in call-graph order.
    pub callees: Vec<String>,
    /// Include targets of the unit's file, as written (`"buf.h"`, `<string.h>`).
    pub headers: Vec<String>,
    pub globals: Vec<NamedSnippet>,
    pub records: Vec<NamedSnippet>,
    pub macros: Vec<NamedSnippet>,
    /// Called names without a definition in the repo (library calls, prototypes only).
    pub external: Vec<String>,
    pub ambiguous: Vec<String>,
    pub indirect_calls: usize,
}

impl DependencySet {
    pub fn is_empty_except_headers(&self) -> bool {
        self.callees.is_empty() && self.globals.is_empty() && self.records.is_empty() && self.macros.is_empty()
    }
}

pub fn extract_dependency_set(unit_id: &str, repo: &RepoModel, graph: &CallGraph) -> Result<DependencySet> {
    let unit = repo
        .unit(unit_id)
        .ok_or_else(|| Error::UnknownUnit(unit_id.to_string()))?;
    let idents = &unit.refs.identifiers;
    let pick = |pool: &[NamedSnippet]| -> Vec<NamedSnippet> {
        let mut seen = BTreeSet::new();
        pool.iter()
            .filter(|s| !s.text.trim().is_empty())
            .filter(|s| s.names.iter().any(|n| idents.contains(n)))
            .filter(|s| seen.insert((s.file.clone(), s.text.clone())))
            .cloned()
            .collect()
    };
    let headers = repo
        .file(&unit.file)
        .map(|f| {
            let mut seen = BTreeSet::new();
            f.includes
                .iter()
                .filter(|h| seen.insert(h.to_string()))
                .cloned()
                .collect()
        })
        .unwrap_or_default();

    Ok(DependencySet {
        unit_id: unit_id.to_string(),
        callees: graph.callees(unit_id).into_iter().map(str::to_string).collect(),
        headers,
        globals: pick(&repo.globals),
        records: pick(&repo.records),
        macros: pick(&repo.macros),
        external: graph.external_refs(unit_id).to_vec(),
        ambiguous: graph.ambiguous_refs(unit_id).to_vec(),
        indirect_calls: graph.indirect_calls(unit_id),
    })
}
