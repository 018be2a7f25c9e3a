mod common;

use std::collections::BTreeSet;

use crosswalk_core::analyzer::{
    build_call_graph, condense, extract_dependency_set, parse_c_repo, topological_order, CallGraph, ParseOptions,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracles::{
    has_cycle_exhaustive, has_cycle_kahn, order_violations, random_dag, random_digraph, reachability,
};
use common::{mini_repo, UNITS};

fn fixture_text(rel: &str) -> String {
    std::fs::read_to_string(mini_repo().join(rel)).unwrap()
}

#[test]
fn fixture_has_five_units_with_exact_spans() {
    let repo = parse_c_repo(&mini_repo(), &ParseOptions::default()).unwrap();
    let ids: Vec<&str> = repo.units.iter().map(|u| u.id.as_str()).collect();
    assert_eq!(ids, UNITS);

    // Hand-counted: an 18-byte include line plus blank line, then a 55-byte definition.
    let first = repo.unit("src/buf.c::buf_len").unwrap();
    assert_eq!((first.span.start, first.span.end), (18, 73));

    for unit in &repo.units {
        let text = fixture_text(&unit.file);
        let header = text
            .lines()
            .find(|l| l.contains(&format!("{}(", unit.name)) && !l.trim_end().ends_with(';') && !l.starts_with(' '))
            .unwrap();
        let start = text.find(header).unwrap();
        let end = start + text[start..].find("\n}").unwrap() + 2;
        assert_eq!((unit.span.start, unit.span.end), (start, end), "{}", unit.id);
        assert_eq!(unit.source, text[start..end]);
    }
}

#[test]
fn fixture_edges_match_hand_labels() {
    let repo = parse_c_repo(&mini_repo(), &ParseOptions::default()).unwrap();
    let graph = build_call_graph(&repo);
    let edges: BTreeSet<(String, String)> = graph.edges().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    let expected: BTreeSet<(String, String)> = [
        ("src/buf.c::buf_push", "src/buf.c::buf_len"),
        ("src/buf.c::buf_push", "src/buf.c::buf_clear"),
        ("src/hash.c::hash_buf", "src/buf.c::buf_len"),
        ("src/hash.c::hash_buf", "src/hash.c::hash_byte"),
    ]
    .iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    assert_eq!(edges, expected);

    let order = topological_order(&graph);
    assert_eq!(
        order.levels,
        vec![
            vec!["src/buf.c::buf_len", "src/buf.c::buf_clear", "src/hash.c::hash_byte"],
            vec!["src/buf.c::buf_push", "src/hash.c::hash_buf"],
        ]
    );
    assert!(order_violations(&graph, &order).is_empty());
}

#[test]
fn dependency_set_of_buf_push() {
    let repo = parse_c_repo(&mini_repo(), &ParseOptions::default()).unwrap();
    let graph = build_call_graph(&repo);
    let deps = extract_dependency_set("src/buf.c::buf_push", &repo, &graph).unwrap();
    assert_eq!(deps.callees, ["src/buf.c::buf_len", "src/buf.c::buf_clear"]);
    assert_eq!(deps.records.len(), 1);
    assert!(deps.records[0].text.starts_with("struct buf {"));
    assert_eq!(deps.macros.len(), 1);
    assert_eq!(deps.macros[0].names, ["BUF_CAP"]);
    assert!(deps.macros[0].text.contains("#define BUF_CAP 16"));
    assert_eq!(deps.headers, ["\"buf.h\""]);

    let leaf = extract_dependency_set("src/hash.c::hash_byte", &repo, &graph).unwrap();
    assert!(leaf.callees.is_empty() && leaf.records.is_empty() && leaf.macros.is_empty());

    for unit in &repo.units {
        let d = extract_dependency_set(&unit.id, &repo, &graph).unwrap();
        assert!(d.callees.iter().all(|c| graph.contains(c)));
        assert_eq!(d, extract_dependency_set(&unit.id, &repo, &graph).unwrap());
    }
}

#[test]
fn reparsing_is_deterministic() {
    let a = parse_c_repo(&mini_repo(), &ParseOptions::default()).unwrap();
    let b = parse_c_repo(&mini_repo(), &ParseOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(build_call_graph(&a), build_call_graph(&b));
}

#[test]
fn random_dags_get_valid_orders() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (nodes, edges) = random_dag(&mut rng, 50);
        let graph = CallGraph::from_edges(nodes, &edges);
        let order = topological_order(&graph);
        let problems = order_violations(&graph, &order);
        assert!(problems.is_empty(), "{problems:?}");
    }
}

#[test]
fn condensation_of_random_digraphs_is_acyclic_and_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for round in 0..200 {
        let g = random_digraph(&mut rng, if round % 2 == 0 { 12 } else { 40 });
        let c = condense(&g);
        if c.dag.len() <= 12 {
            assert!(!has_cycle_exhaustive(&c.dag));
        }
        assert!(!has_cycle_kahn(&c.dag));
        let r = reachability(&g);
        for (u, ru) in r.iter().enumerate() {
            for (v, rv) in r.iter().enumerate() {
                let mutual = ru[v] && rv[u];
                assert_eq!(c.component_of[u] == c.component_of[v], mutual, "{u} {v}");
            }
        }
        for (u, v) in g.edges() {
            let (cu, cv) = (c.component_of[u], c.component_of[v]);
            assert_eq!(cu != cv, c.dag.successors(cu).contains(&cv));
        }
    }
}

proptest! {
    #[test]
    fn cross_component_calls_point_downward(
        n in 1usize..16,
        raw in proptest::collection::vec((0usize..16, 0usize..16), 0..40),
    ) {
        let nodes: Vec<String> = (0..n).map(|i| format!("u{i:02}")).collect();
        let edges: Vec<(String, String)> = raw
            .into_iter()
            .filter(|(a, b)| *a < n && *b < n)
            .map(|(a, b)| (nodes[a].clone(), nodes[b].clone()))
            .collect();
        let graph = CallGraph::from_edges(nodes, &edges);
        let order = topological_order(&graph);
        let problems = order_violations(&graph, &order);
        prop_assert!(problems.is_empty(), "{:?}", problems);
        prop_assert!(!has_cycle_exhaustive(&graph.condensation().dag));
    }
}
