//! C-side analysis: parsing, call graph, dependency sets and translation order.

mod deps;
mod graph;
mod order;
mod parse;

use std::fmt::Write as _;

pub use deps::{extract_dependency_set, DependencySet};
pub use graph::{build_call_graph, condense, CallGraph, Condensation, Digraph};
pub use order::{topological_order, TranslationOrder};
pub use parse::{
    parse_c_repo, Declaration, FunctionUnit, NamedSnippet, ParseOptions, RepoModel, SkippedFile, SnippetKind,
    SourceFile, Span, UnitRefs,
};

/// Line-oriented graph dump, one record per node:
///
/// ```text
/// # crosswalk call graph v1
/// node <id>\tlevel=<n>\tcomponent=<c>\tcalls=<id>,<id>\texternal=<name>,<name>
/// ```
///
/// Nodes appear in translation order (level, then node order).
pub fn render_graph_dump(graph: &CallGraph, order: &TranslationOrder) -> String {
    let mut out = String::from("# crosswalk call graph v1\n");
    for level in &order.levels {
        for id in level {
            let _ = writeln!(
                out,
                "node {}\tlevel={}\tcomponent={}\tcalls={}\texternal={}",
                id,
                order.level_of(id).unwrap_or(0),
                graph.component_of(id).unwrap_or(0),
                graph.callees(id).join(","),
                graph.external_refs(id).join(","),
            );
        }
    }
    out
}
