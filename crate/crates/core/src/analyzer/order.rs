//! Bottom-up translation order over the condensation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::CallGraph;

/// Units grouped by level; level 0 holds leaf components. Within a level, ids
/// keep call-graph node order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationOrder {
    pub levels: Vec<Vec<String>>,
    level_of: BTreeMap<String, usize>,
}

impl TranslationOrder {
    pub fn level_of(&self, id: &str) -> Option<usize> {
        self.level_of.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.level_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.level_of.is_empty()
    }

    /// Units of one level grouped into their strongly connected components.
    /// Components are ordered by their smallest member.
    pub fn batches(&self, level: usize, graph: &CallGraph) -> Vec<Vec<String>> {
        let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for id in &self.levels[level] {
            let c = graph.component_of(id).expect("unit in graph");
            groups.entry(c).or_default().push(id.clone());
        }
        let mut batches: Vec<Vec<String>> = groups.into_values().collect();
        batches.sort_by_key(|b| b.first().and_then(|id| graph.node_index(id)));
        batches
    }
}

/// `level(c) = 0` for sink components, else `1 + max(level(successor))`.
pub fn topological_order(graph: &CallGraph) -> TranslationOrder {
    let cond = graph.condensation();
    // Components are sinks-first, so successors are always resolved already.
    let mut comp_level = vec![0usize; cond.components.len()];
    for c in 0..cond.components.len() {
        comp_level[c] = cond
            .dag
            .successors(c)
            .iter()
            .map(|&s| comp_level[s] + 1)
            .max()
            .unwrap_or(0);
    }
    let depth = comp_level.iter().copied().max().map_or(0, |m| m + 1);
    let mut levels = vec![Vec::new(); depth];
    let mut level_of = BTreeMap::new();
    for (u, id) in graph.nodes().iter().enumerate() {
        let l = comp_level[cond.component_of[u]];
        levels[l].push(id.clone());
        level_of.insert(id.clone(), l);
    }
    TranslationOrder { levels, level_of }
}
