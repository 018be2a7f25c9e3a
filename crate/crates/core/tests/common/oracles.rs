//! Slow, obviously-correct reference computations used to check the library.

use crosswalk_core::analyzer::{CallGraph, Digraph, TranslationOrder};
use rand::Rng;

/// Checks that every unit sits on exactly one level and that every cross
/// component call goes from a higher level to a strictly lower one.
pub fn order_violations(graph: &CallGraph, order: &TranslationOrder) -> Vec<String> {
    let mut problems = Vec::new();
    let mut seen = std::collections::BTreeMap::new();
    for (l, level) in order.levels.iter().enumerate() {
        for id in level {
            if seen.insert(id.clone(), l).is_some() {
                problems.push(format!("{id} listed twice"));
            }
        }
    }
    for id in graph.nodes() {
        if !seen.contains_key(id) {
            problems.push(format!("{id} missing from order"));
        }
    }
    for (caller, callee) in graph.edges() {
        let (a, b) = (seen.get(caller), seen.get(callee));
        let (Some(&a), Some(&b)) = (a, b) else { continue };
        let same = graph.component_of(caller) == graph.component_of(callee);
        if same && a != b {
            problems.push(format!("{caller} and {callee} share a cycle but not a level"));
        }
        if !same && b >= a {
            problems.push(format!(
                "{callee} (level {b}) is not below its caller {caller} (level {a})"
            ));
        }
    }
    problems
}

/// Enumerates every simple path; true when some path closes on its start.
pub fn has_cycle_exhaustive(g: &Digraph) -> bool {
    fn walk(g: &Digraph, start: usize, at: usize, on_path: &mut Vec<bool>) -> bool {
        for &next in g.successors(at) {
            if next == start {
                return true;
            }
            if !on_path[next] {
                on_path[next] = true;
                let found = walk(g, start, next, on_path);
                on_path[next] = false;
                if found {
                    return true;
                }
            }
        }
        false
    }
    (0..g.len()).any(|s| {
        let mut on_path = vec![false; g.len()];
        on_path[s] = true;
        walk(g, s, s, &mut on_path)
    })
}

/// Kahn's algorithm: acyclic iff every node gets removed.
pub fn has_cycle_kahn(g: &Digraph) -> bool {
    let n = g.len();
    let mut indeg = vec![0usize; n];
    for (_, v) in g.edges() {
        indeg[v] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&u| indeg[u] == 0).collect();
    let mut removed = 0;
    while let Some(u) = ready.pop() {
        removed += 1;
        for &v in g.successors(u) {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                ready.push(v);
            }
        }
    }
    removed != n
}

/// Transitive closure by Floyd-Warshall; `r[u][v]` when v is reachable from u
/// (every node reaches itself).
pub fn reachability(g: &Digraph) -> Vec<Vec<bool>> {
    let n = g.len();
    let mut r = vec![vec![false; n]; n];
    for (u, row) in r.iter_mut().enumerate() {
        row[u] = true;
    }
    for (u, v) in g.edges() {
        r[u][v] = true;
    }
    for k in 0..n {
        let through = r[k].clone();
        for row in r.iter_mut().filter(|row| row[k]) {
            for (j, _) in through.iter().enumerate().filter(|(_, &x)| x) {
                row[j] = true;
            }
        }
    }
    r
}

/// Random DAG: edges only from higher to lower index, then nodes shuffled
/// into random names so the library cannot lean on index order.
pub fn random_dag(rng: &mut impl Rng, max_nodes: usize) -> (Vec<String>, Vec<(String, String)>) {
    let n = rng.random_range(1..=max_nodes);
    let density: f64 = rng.random_range(0.0..0.3);
    let mut names: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
    for i in (1..n).rev() {
        names.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..u {
            if rng.random_bool(density) {
                edges.push((names[u].clone(), names[v].clone()));
            }
        }
    }
    let mut nodes = names;
    nodes.sort();
    (nodes, edges)
}

pub fn random_digraph(rng: &mut impl Rng, max_nodes: usize) -> Digraph {
    let n = rng.random_range(1..=max_nodes);
    let density: f64 = rng.random_range(0.0..0.4);
    let mut g = Digraph::new(n);
    for u in 0..n {
        for v in 0..n {
            if rng.random_bool(density) {
                g.add_edge(u, v);
            }
        }
    }
    g
}

/// Welford mean and population standard deviation.
pub fn welford(xs: &[f64]) -> (f64, f64) {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    (mean, (m2 / xs.len() as f64).sqrt())
}

/// Group objective evaluated one term at a time, clipping spelled out.
pub fn surrogate_termwise(ratios: &[f64], adv: &[f64], eps: f64, kl_ratios: &[f64], beta: f64) -> f64 {
    let mut terms = Vec::with_capacity(ratios.len());
    for i in 0..ratios.len() {
        let r = ratios[i];
        let clipped = if r < 1.0 - eps {
            1.0 - eps
        } else if r > 1.0 + eps {
            1.0 + eps
        } else {
            r
        };
        let a = r * adv[i];
        let b = clipped * adv[i];
        let policy = if a < b { a } else { b };
        let q = kl_ratios[i];
        let kl = q - q.ln() - 1.0;
        terms.push(policy - beta * kl);
    }
    terms.iter().sum::<f64>() / terms.len() as f64
}
