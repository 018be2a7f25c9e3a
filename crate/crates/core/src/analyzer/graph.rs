//! Global call graph and its strongly connected component condensation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::parse::RepoModel;

/// Directed graph over dense node indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Digraph {
    successors: Vec<BTreeSet<usize>>,
}

impl Digraph {
    pub fn new(n: usize) -> Self {
        Self {
            successors: vec![BTreeSet::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = Self::new(n);
        for (u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        self.successors[u].insert(v);
    }

    pub fn len(&self) -> usize {
        self.successors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.successors.is_empty()
    }

    pub fn successors(&self, u: usize) -> &BTreeSet<usize> {
        &self.successors[u]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.successors
            .iter()
            .enumerate()
            .flat_map(|(u, s)| s.iter().map(move |&v| (u, v)))
    }
}

/// Partition of a digraph into strongly connected components plus the acyclic
/// component DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condensation {
    /// Components in reverse topological order: every component's successors
    /// appear before it. Members are sorted ascending.
    pub components: Vec<Vec<usize>>,
    pub component_of: Vec<usize>,
    pub dag: Digraph,
}

/// Iterative Tarjan; components come out sinks-first.
pub fn condense(graph: &Digraph) -> Condensation {
    const UNVISITED: usize = usize::MAX;
    let n = graph.len();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut components: Vec<Vec<usize>> = Vec::new();
    let succ: Vec<Vec<usize>> = (0..n).map(|u| graph.successors(u).iter().copied().collect()).collect();

    for start in 0..n {
        if index[start] != UNVISITED {
            continue;
        }
        // (node, position of the next successor to examine)
        let mut work: Vec<(usize, usize)> = vec![(start, 0)];
        index[start] = next_index;
        lowlink[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;

        while let Some(&mut (v, ref mut pos)) = work.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
            if lowlink[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                component.sort_unstable();
                components.push(component);
            }
        }
    }

    let mut component_of = vec![0; n];
    for (c, members) in components.iter().enumerate() {
        for &m in members {
            component_of[m] = c;
        }
    }
    let mut dag = Digraph::new(components.len());
    for (u, v) in graph.edges() {
        let (cu, cv) = (component_of[u], component_of[v]);
        if cu != cv {
            dag.add_edge(cu, cv);
        }
    }
    Condensation {
        components,
        component_of,
        dag,
    }
}

/// Function-level call graph of a repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallGraph {
    nodes: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    graph: Digraph,
    condensation: Condensation,
    /// Call names with no definition in the repo, per node.
    external: BTreeMap<usize, Vec<String>>,
    /// Call names that resolved to several definitions in other files, per node.
    ambiguous: BTreeMap<usize, Vec<String>>,
    /// Count of calls through function pointers or member expressions, per node.
    indirect: BTreeMap<usize, usize>,
}

impl CallGraph {
    /// Builds a graph over pre-resolved edges (node ids must be unique).
    pub fn from_edges(nodes: Vec<String>, edges: &[(String, String)]) -> Self {
        let index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let graph = Digraph::from_edges(
            nodes.len(),
            edges.iter().map(|(a, b)| (index[a.as_str()], index[b.as_str()])),
        );
        let condensation = condense(&graph);
        Self {
            nodes,
            index,
            graph,
            condensation,
            external: BTreeMap::new(),
            ambiguous: BTreeMap::new(),
            indirect: BTreeMap::new(),
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn digraph(&self) -> &Digraph {
        &self.graph
    }

    pub fn condensation(&self) -> &Condensation {
        &self.condensation
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.graph
            .edges()
            .map(|(u, v)| (self.nodes[u].as_str(), self.nodes[v].as_str()))
    }

    pub fn callees(&self, id: &str) -> Vec<&str> {
        self.node_index(id)
            .map(|u| {
                self.graph
                    .successors(u)
                    .iter()
                    .map(|&v| self.nodes[v].as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn external_refs(&self, id: &str) -> &[String] {
        self.node_index(id)
            .and_then(|u| self.external.get(&u))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn ambiguous_refs(&self, id: &str) -> &[String] {
        self.node_index(id)
            .and_then(|u| self.ambiguous.get(&u))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn indirect_calls(&self, id: &str) -> usize {
        self.node_index(id)
            .and_then(|u| self.indirect.get(&u))
            .copied()
            .unwrap_or(0)
    }

    /// Component index of a node.
    pub fn component_of(&self, id: &str) -> Option<usize> {
        self.node_index(id).map(|u| self.condensation.component_of[u])
    }

    /// Ids of every member of the component containing `id`.
    pub fn component_members(&self, id: &str) -> Vec<&str> {
        match self.component_of(id) {
            Some(c) => self.condensation.components[c]
                .iter()
                .map(|&m| self.nodes[m].as_str())
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Resolves every direct call by name: same-file definitions win; otherwise a
/// unique definition elsewhere; otherwise all candidates, flagged ambiguous.
/// Calls to macros are neither edges nor external references.
pub fn build_call_graph(repo: &RepoModel) -> CallGraph {
    let nodes: Vec<String> = repo.units.iter().map(|u| u.id.clone()).collect();
    let mut by_name: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, unit) in repo.units.iter().enumerate() {
        by_name.entry(unit.name.as_str()).or_default().push(i);
    }
    let macro_names: BTreeSet<&str> = repo
        .macros
        .iter()
        .flat_map(|m| m.names.iter().map(String::as_str))
        .collect();

    let mut graph = Digraph::new(nodes.len());
    let mut external: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut ambiguous: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut indirect: BTreeMap<usize, usize> = BTreeMap::new();

    for (u, unit) in repo.units.iter().enumerate() {
        if unit.refs.indirect_calls > 0 {
            indirect.insert(u, unit.refs.indirect_calls);
        }
        for call in &unit.refs.calls {
            let Some(candidates) = by_name.get(call.as_str()) else {
                if !macro_names.contains(call.as_str()) {
                    external.entry(u).or_default().push(call.clone());
                }
                continue;
            };
            let same_file: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&c| repo.units[c].file == unit.file)
                .collect();
            let targets = if !same_file.is_empty() {
                same_file
            } else {
                if candidates.len() > 1 {
                    ambiguous.entry(u).or_default().push(call.clone());
                }
                candidates.clone()
            };
            for v in targets {
                graph.add_edge(u, v);
            }
        }
    }

    let condensation = condense(&graph);
    let index = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    CallGraph {
        nodes,
        index,
        graph,
        condensation,
        external,
        ambiguous,
        indirect,
    }
}
