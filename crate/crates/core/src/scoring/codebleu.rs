//! CodeBLEU for Rust, four components weighted 0.25 each.
//!
//! * `bleu`: clipped n-gram precision for n = 1..4 over lexical tokens, geometric
//!   mean, brevity penalty. Orders n >= 2 use add-one smoothing.
//! * `weighted_bleu`: as `bleu`, but unigram matches count 1.0 for reserved
//!   words and 0.2 for other tokens.
//! * `syntax`: fraction of the reference's named syntax subtrees (by shape,
//!   ignoring identifiers) that also occur in the candidate, counts clipped.
//! * `dataflow`: fraction of the reference's def-use edges found in the
//!   candidate after renaming variables by first appearance. A reference
//!   without edges scores 1 against a candidate without edges, 0 otherwise.
//!
//! Roles are not interchangeable: precision is taken over the candidate,
//! syntax and dataflow recall over the reference.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use tree_sitter::{Node, Parser, Tree};

pub const RUST_KEYWORDS: &[&str] = &[
    "as", "async", "await", "break", "const", "continue", "crate", "dyn", "else", "enum", "extern", "false", "fn",
    "for", "if", "impl", "in", "let", "loop", "match", "mod", "move", "mut", "pub", "ref", "return", "self", "Self",
    "static", "struct", "super", "trait", "true", "type", "unsafe", "use", "where", "while", "abstract", "become",
    "box", "do", "final", "macro", "override", "priv", "try", "typeof", "unsized", "virtual", "yield", "union",
];

const KEYWORD_WEIGHT: f64 = 1.0;
const OTHER_WEIGHT: f64 = 0.2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CodeBleu {
    pub bleu: f64,
    pub weighted_bleu: f64,
    pub syntax: f64,
    pub dataflow: f64,
    pub total: f64,
}

fn parse(text: &str) -> Tree {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_rust::LANGUAGE.into())
        .expect("bundled Rust grammar loads");
    parser.parse(text, None).expect("parser has a language")
}

fn is_atomic(kind: &str) -> bool {
    matches!(kind, "string_literal" | "raw_string_literal" | "char_literal")
}

fn is_comment(kind: &str) -> bool {
    matches!(kind, "line_comment" | "block_comment")
}

/// Leaves of the syntax tree, literals kept whole, comments dropped.
fn leaf_tokens(tree: &Tree, text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![tree.root_node()];
    while let Some(node) = stack.pop() {
        let kind = node.kind();
        if is_comment(kind) {
            continue;
        }
        if node.child_count() == 0 || is_atomic(kind) {
            let t = &text[node.byte_range()];
            if !t.trim().is_empty() {
                out.push(t.to_string());
            }
            continue;
        }
        let mut cursor = node.walk();
        let children: Vec<Node> = node.children(&mut cursor).collect();
        stack.extend(children.into_iter().rev());
    }
    out
}

pub fn rust_code_tokens(text: &str) -> Vec<String> {
    leaf_tokens(&parse(text), text)
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped matches and candidate n-gram count.
fn clipped(cand: &[String], refr: &[String], n: usize) -> (usize, usize) {
    let c = ngrams(cand, n);
    let r = ngrams(refr, n);
    let matched = c.iter().map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, cand.len().saturating_sub(n - 1))
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

fn smoothed_higher_orders(cand: &[String], refr: &[String]) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (i, n) in (2..=4).enumerate() {
        let (m, t) = clipped(cand, refr, n);
        p[i] = (m as f64 + 1.0) / (t as f64 + 1.0);
    }
    p
}

fn combine(p1: f64, higher: [f64; 3], bp: f64) -> f64 {
    if p1 <= 0.0 {
        return 0.0;
    }
    let log_sum = p1.ln() + higher.iter().map(|p| p.ln()).sum::<f64>();
    bp * (0.25 * log_sum).exp()
}

fn bleu(cand: &[String], refr: &[String]) -> f64 {
    let (m1, t1) = clipped(cand, refr, 1);
    let p1 = if t1 == 0 { 0.0 } else { m1 as f64 / t1 as f64 };
    combine(
        p1,
        smoothed_higher_orders(cand, refr),
        brevity_penalty(cand.len(), refr.len()),
    )
}

fn token_weight(t: &str) -> f64 {
    if RUST_KEYWORDS.contains(&t) {
        KEYWORD_WEIGHT
    } else {
        OTHER_WEIGHT
    }
}

fn weighted_bleu(cand: &[String], refr: &[String]) -> f64 {
    let c = ngrams(cand, 1);
    let r = ngrams(refr, 1);
    let (mut num, mut den) = (0.0, 0.0);
    for (g, k) in &c {
        let w = token_weight(&g[0]);
        num += w * (*k).min(r.get(g).copied().unwrap_or(0)) as f64;
        den += w * *k as f64;
    }
    let p1 = if den == 0.0 { 0.0 } else { num / den };
    combine(
        p1,
        smoothed_higher_orders(cand, refr),
        brevity_penalty(cand.len(), refr.len()),
    )
}

fn named_subtrees(tree: &Tree) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![tree.root_node()];
    while let Some(node) = stack.pop() {
        if is_comment(node.kind()) {
            continue;
        }
        if node.is_named() {
            out.push(node.to_sexp());
        }
        let mut cursor = node.walk();
        stack.extend(node.children(&mut cursor));
    }
    out
}

fn syntax_match(cand: &Tree, refr: &Tree) -> f64 {
    let reference = named_subtrees(refr);
    if reference.is_empty() {
        return 0.0;
    }
    let mut pool: HashMap<String, usize> = HashMap::new();
    for s in named_subtrees(cand) {
        *pool.entry(s).or_insert(0) += 1;
    }
    let matched = reference
        .iter()
        .filter(|s| match pool.get_mut(*s) {
            Some(k) if *k > 0 => {
                *k -= 1;
                true
            }
            _ => false,
        })
        .count();
    matched as f64 / reference.len() as f64
}

fn identifiers(node: Node, text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![node];
    while let Some(n) = stack.pop() {
        if n.kind() == "identifier" {
            out.push(text[n.byte_range()].to_string());
            continue;
        }
        let mut cursor = n.walk();
        let children: Vec<Node> = n.children(&mut cursor).collect();
        stack.extend(children.into_iter().rev());
    }
    out
}

/// `(target, relation, source)` edges; `source` is empty for definitions
/// without variable inputs. Variables are renamed `v0, v1, ..` by first use.
pub(crate) fn dataflow_edges(text: &str) -> Vec<(String, String, String)> {
    let tree = parse(text);
    let mut raw: Vec<(String, &'static str, String)> = Vec::new();
    let mut stack = vec![tree.root_node()];
    while let Some(node) = stack.pop() {
        let fields = match node.kind() {
            "let_declaration" => Some(("pattern", "value", "from", false)),
            "for_expression" => Some(("pattern", "value", "from", false)),
            "assignment_expression" => Some(("left", "right", "from", false)),
            "compound_assignment_expr" => Some(("left", "right", "from", true)),
            "parameter" => Some(("pattern", "", "param", false)),
            _ => None,
        };
        if let Some((target_field, source_field, rel, self_source)) = fields {
            let targets = node
                .child_by_field_name(target_field)
                .map(|n| identifiers(n, text))
                .unwrap_or_default();
            let mut sources = node
                .child_by_field_name(source_field)
                .map(|n| identifiers(n, text))
                .unwrap_or_default();
            for t in &targets {
                if self_source {
                    sources.insert(0, t.clone());
                }
                if sources.is_empty() {
                    raw.push((t.clone(), rel, String::new()));
                }
                for s in &sources {
                    raw.push((t.clone(), rel, s.clone()));
                }
                if self_source {
                    sources.remove(0);
                }
            }
        }
        let mut cursor = node.walk();
        let children: Vec<Node> = node.children(&mut cursor).collect();
        stack.extend(children.into_iter().rev());
    }
    let mut names: HashMap<String, String> = HashMap::new();
    let mut rename = |v: &str| -> String {
        if v.is_empty() {
            return String::new();
        }
        let next = format!("v{}", names.len());
        names.entry(v.to_string()).or_insert(next).clone()
    };
    raw.into_iter()
        .map(|(t, rel, s)| {
            let t = rename(&t);
            let s = rename(&s);
            (t, rel.to_string(), s)
        })
        .collect()
}

fn dataflow_match(cand: &str, refr: &str) -> f64 {
    let reference = dataflow_edges(refr);
    let candidate = dataflow_edges(cand);
    if reference.is_empty() {
        return if candidate.is_empty() { 1.0 } else { 0.0 };
    }
    let mut pool: HashMap<&(String, String, String), usize> = HashMap::new();
    for e in &candidate {
        *pool.entry(e).or_insert(0) += 1;
    }
    let matched = reference
        .iter()
        .filter(|e| match pool.get_mut(e) {
            Some(k) if *k > 0 => {
                *k -= 1;
                true
            }
            _ => false,
        })
        .count();
    matched as f64 / reference.len() as f64
}

pub fn codebleu(candidate: &str, reference: &str) -> CodeBleu {
    if candidate.trim().is_empty() || reference.trim().is_empty() {
        tracing::warn!("codebleu on empty input scores 0");
        return CodeBleu::default();
    }
    let cand_tree = parse(candidate);
    let ref_tree = parse(reference);
    let cand_tokens = leaf_tokens(&cand_tree, candidate);
    let ref_tokens = leaf_tokens(&ref_tree, reference);
    if cand_tokens.is_empty() || ref_tokens.is_empty() {
        tracing::warn!("codebleu on comment-only input scores 0");
        return CodeBleu::default();
    }
    let bleu = bleu(&cand_tokens, &ref_tokens);
    let weighted_bleu = weighted_bleu(&cand_tokens, &ref_tokens);
    let syntax = syntax_match(&cand_tree, &ref_tree);
    let dataflow = dataflow_match(candidate, reference);
    CodeBleu {
        bleu,
        weighted_bleu,
        syntax,
        dataflow,
        total: 0.25 * (bleu + weighted_bleu + syntax + dataflow),
    }
}
