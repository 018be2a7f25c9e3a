//! Unsafe-line counting over translated sources.
//!
//! A code line is any line holding a non-comment token. Unsafe lines are
//! code lines holding a token inside the braces of an `unsafe { .. }` block,
//! plus the signature lines of `unsafe fn`, `unsafe impl` and `unsafe trait`
//! items (from the item start to the line of its opening brace).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use tree_sitter::{Node, Parser};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnsafeStats {
    pub unsafe_lines: usize,
    pub code_lines: usize,
    /// Names of inputs skipped because they did not parse.
    pub excluded: Vec<String>,
}

impl UnsafeStats {
    /// Percentage of code lines that are unsafe; 0 when there is no code.
    pub fn ratio(&self) -> f64 {
        if self.code_lines == 0 {
            0.0
        } else {
            100.0 * self.unsafe_lines as f64 / self.code_lines as f64
        }
    }
}

fn is_comment(node: Node<'_>) -> bool {
    matches!(node.kind(), "line_comment" | "block_comment")
}

fn leaf_rows(node: Node<'_>, rows: &mut BTreeSet<usize>) {
    if is_comment(node) {
        return;
    }
    if node.child_count() == 0 {
        if node.start_byte() < node.end_byte() {
            rows.extend(node.start_position().row..=node.end_position().row);
        }
        return;
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        leaf_rows(child, rows);
    }
}

fn has_unsafe_modifier(node: Node<'_>) -> bool {
    let mut cursor = node.walk();
    let found = node.children(&mut cursor).any(|c| match c.kind() {
        "unsafe" => true,
        "function_modifiers" => {
            let mut inner = c.walk();
            let hit = c.children(&mut inner).any(|m| m.kind() == "unsafe");
            hit
        }
        _ => false,
    });
    found
}

fn collect_unsafe(node: Node<'_>, rows: &mut BTreeSet<usize>) {
    if is_comment(node) {
        return;
    }
    match node.kind() {
        "unsafe_block" => {
            if let Some(block) = node.child(node.child_count().saturating_sub(1) as _) {
                let n = block.child_count();
                for i in 1..n.saturating_sub(1) {
                    if let Some(c) = block.child(i as _) {
                        leaf_rows(c, rows);
                    }
                }
            }
        }
        "function_item" | "function_signature_item" | "impl_item" | "trait_item" if has_unsafe_modifier(node) => {
            let start = node.start_position().row;
            let body = node
                .child_by_field_name("body")
                .map(|b| b.start_position().row)
                .unwrap_or(node.end_position().row);
            let mut sig = BTreeSet::new();
            leaf_rows(node, &mut sig);
            rows.extend(sig.range(start..=body).copied());
        }
        _ => {}
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_unsafe(child, rows);
    }
}

/// Counts one file; `None` if it does not parse.
pub fn count_unsafe_lines(text: &str) -> Option<(usize, usize)> {
    let mut parser = Parser::new();
    parser.set_language(&tree_sitter_rust::LANGUAGE.into()).ok()?;
    let tree = parser.parse(text, None)?;
    let root = tree.root_node();
    if root.has_error() {
        return None;
    }
    let mut code = BTreeSet::new();
    leaf_rows(root, &mut code);
    let mut unsafe_rows = BTreeSet::new();
    collect_unsafe(root, &mut unsafe_rows);
    let unsafe_code = unsafe_rows.intersection(&code).count();
    Some((unsafe_code, code.len()))
}

/// Sums over `(name, text)` files, excluding those that fail to parse.
pub fn unsafe_ratio<'a>(files: impl IntoIterator<Item = (&'a str, &'a str)>) -> UnsafeStats {
    let mut stats = UnsafeStats::default();
    for (name, text) in files {
        match count_unsafe_lines(text) {
            Some((u, c)) => {
                stats.unsafe_lines += u;
                stats.code_lines += c;
            }
            None => {
                tracing::warn!(file = name, "unparseable file excluded from unsafe ratio");
                stats.excluded.push(name.to_string());
            }
        }
    }
    stats
}
