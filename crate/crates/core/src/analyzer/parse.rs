//! Preprocessor-free C parsing on top of tree-sitter.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tree_sitter::{Node, Parser};
use walkdir::WalkDir;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// File extensions (without the dot) treated as C sources.
    pub extensions: Vec<String>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            extensions: vec!["c".into(), "h".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Names referenced from inside one function definition, gathered on the
/// unexpanded token stream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitRefs {
    /// Direct call targets (`name(...)`), first-occurrence order, deduplicated.
    pub calls: Vec<String>,
    /// Calls whose callee expression is not a plain identifier.
    pub indirect_calls: usize,
    /// Every identifier and type identifier in signature and body.
    pub identifiers: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionUnit {
    /// `<file>::<name>`, with a `#n` suffix for repeated definitions in one file.
    pub id: String,
    pub name: String,
    pub file: String,
    pub source: String,
    pub signature: String,
    pub span: Span,
    pub refs: UnitRefs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnippetKind {
    Global,
    Struct,
    Union,
    Enum,
    Typedef,
    Macro,
}

/// A repo-level definition a function may depend on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NamedSnippet {
    pub kind: SnippetKind,
    /// Primary name first; struct tags, typedef names and enumerators follow.
    pub names: Vec<String>,
    pub file: String,
    pub text: String,
}

impl NamedSnippet {
    pub fn name(&self) -> &str {
        &self.names[0]
    }
}

/// A function prototype without a body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declaration {
    pub name: String,
    pub file: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub len: usize,
    pub includes: Vec<String>,
    pub has_syntax_errors: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoModel {
    pub root: PathBuf,
    pub files: Vec<SourceFile>,
    pub units: Vec<FunctionUnit>,
    pub declarations: Vec<Declaration>,
    pub globals: Vec<NamedSnippet>,
    pub records: Vec<NamedSnippet>,
    pub macros: Vec<NamedSnippet>,
    pub skipped: Vec<SkippedFile>,
}

impl RepoModel {
    pub fn unit(&self, id: &str) -> Option<&FunctionUnit> {
        self.units.iter().find(|u| u.id == id)
    }

    pub fn file(&self, path: &str) -> Option<&SourceFile> {
        self.files.iter().find(|f| f.path == path)
    }
}

struct ParsedFile {
    file: SourceFile,
    units: Vec<(String, FunctionUnit)>,
    declarations: Vec<Declaration>,
    globals: Vec<NamedSnippet>,
    records: Vec<NamedSnippet>,
    macros: Vec<NamedSnippet>,
}

pub fn parse_c_repo(root: &Path, options: &ParseOptions) -> Result<RepoModel> {
    if !root.is_dir() {
        return Err(Error::MissingRoot(root.to_path_buf()));
    }
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let matches = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| options.extensions.iter().any(|x| x == e));
        if matches {
            paths.push(entry.into_path());
        }
    }
    if paths.is_empty() {
        return Err(Error::NoCSources(root.to_path_buf()));
    }

    let results: Vec<std::result::Result<ParsedFile, SkippedFile>> = paths
        .par_iter()
        .map(|path| {
            let rel = relative_path(root, path);
            let bytes = std::fs::read(path).map_err(|e| SkippedFile {
                path: rel.clone(),
                reason: format!("unreadable: {e}"),
            })?;
            let text = String::from_utf8(bytes).map_err(|_| SkippedFile {
                path: rel.clone(),
                reason: "not valid UTF-8".into(),
            })?;
            parse_file(&rel, &text)
        })
        .collect();

    let mut model = RepoModel {
        root: root.to_path_buf(),
        files: Vec::new(),
        units: Vec::new(),
        declarations: Vec::new(),
        globals: Vec::new(),
        records: Vec::new(),
        macros: Vec::new(),
        skipped: Vec::new(),
    };
    for result in results {
        match result {
            Ok(parsed) => {
                model.files.push(parsed.file);
                model.units.extend(parsed.units.into_iter().map(|(_, u)| u));
                model.declarations.extend(parsed.declarations);
                model.globals.extend(parsed.globals);
                model.records.extend(parsed.records);
                model.macros.extend(parsed.macros);
            }
            Err(skipped) => {
                tracing::warn!(file = %skipped.path, reason = %skipped.reason, "skipping C file");
                model.skipped.push(skipped);
            }
        }
    }
    if model.files.is_empty() {
        return Err(Error::NoCSources(root.to_path_buf()));
    }
    Ok(model)
}

fn relative_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn c_parser() -> Parser {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_c::LANGUAGE.into())
        .expect("tree-sitter-c grammar is ABI compatible");
    parser
}

fn text<'a>(node: Node, src: &'a str) -> &'a str {
    &src[node.byte_range()]
}

fn parse_file(rel: &str, src: &str) -> std::result::Result<ParsedFile, SkippedFile> {
    let tree = c_parser().parse(src, None).ok_or_else(|| SkippedFile {
        path: rel.to_string(),
        reason: "parser produced no tree".into(),
    })?;
    let root = tree.root_node();
    let mut parsed = ParsedFile {
        file: SourceFile {
            path: rel.to_string(),
            len: src.len(),
            includes: Vec::new(),
            has_syntax_errors: root.has_error(),
        },
        units: Vec::new(),
        declarations: Vec::new(),
        globals: Vec::new(),
        records: Vec::new(),
        macros: Vec::new(),
    };
    collect_top_level(root, src, &mut parsed);

    let extracted = parsed.units.len()
        + parsed.declarations.len()
        + parsed.globals.len()
        + parsed.records.len()
        + parsed.macros.len()
        + parsed.file.includes.len();
    if root.has_error() && extracted == 0 && !src.trim().is_empty() {
        return Err(SkippedFile {
            path: rel.to_string(),
            reason: "no recognizable C declarations".into(),
        });
    }

    let mut seen: std::collections::HashMap<String, usize> = Default::default();
    for (name, unit) in &mut parsed.units {
        let n = seen.entry(name.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            unit.id = format!("{}#{}", unit.id, n);
        }
    }
    Ok(parsed)
}

fn is_preproc_container(kind: &str) -> bool {
    matches!(
        kind,
        "preproc_if" | "preproc_ifdef" | "preproc_else" | "preproc_elif" | "preproc_elifdef"
    )
}

fn collect_top_level(node: Node, src: &str, out: &mut ParsedFile) {
    let mut cursor = node.walk();
    let children: Vec<Node> = node.children(&mut cursor).collect();
    for (i, child) in children.iter().enumerate() {
        let child = *child;
        match child.kind() {
            k if is_preproc_container(k) => collect_top_level(child, src, out),
            "preproc_include" => {
                if let Some(path) = child.child_by_field_name("path") {
                    out.file.includes.push(text(path, src).trim().to_string());
                }
            }
            "preproc_def" | "preproc_function_def" => {
                if let Some(name) = child.child_by_field_name("name") {
                    out.macros.push(NamedSnippet {
                        kind: SnippetKind::Macro,
                        names: vec![text(name, src).to_string()],
                        file: out.file.path.clone(),
                        text: text(child, src).trim_end().to_string(),
                    });
                }
            }
            "function_definition" => {
                if let Some(unit) = function_unit(child, src, &out.file.path) {
                    out.units.push((unit.name.clone(), unit));
                }
            }
            "declaration" => collect_declaration(child, src, out),
            "type_definition" => {
                let mut names = Vec::new();
                let mut cursor = child.walk();
                for decl in child.children_by_field_name("declarator", &mut cursor) {
                    if let Some(n) = declarator_name(decl, src) {
                        names.push(n);
                    }
                }
                if let Some(ty) = child.child_by_field_name("type") {
                    names.extend(record_names(ty, src));
                }
                push_unique(&mut names);
                if !names.is_empty() {
                    out.records.push(NamedSnippet {
                        kind: SnippetKind::Typedef,
                        names,
                        file: out.file.path.clone(),
                        text: text(child, src).to_string(),
                    });
                }
            }
            "struct_specifier" | "union_specifier" | "enum_specifier" => {
                if child.child_by_field_name("body").is_none() {
                    continue;
                }
                let names = record_names(child, src);
                if names.is_empty() {
                    continue;
                }
                let mut end = child.end_byte();
                if let Some(next) = children.get(i + 1) {
                    if next.kind() == ";" {
                        end = next.end_byte();
                    }
                }
                out.records.push(NamedSnippet {
                    kind: record_kind(child.kind()),
                    names,
                    file: out.file.path.clone(),
                    text: src[child.start_byte()..end].to_string(),
                });
            }
            _ => {}
        }
    }
}

fn record_kind(kind: &str) -> SnippetKind {
    match kind {
        "union_specifier" => SnippetKind::Union,
        "enum_specifier" => SnippetKind::Enum,
        _ => SnippetKind::Struct,
    }
}

/// Tag name plus, for enums, every enumerator.
fn record_names(node: Node, src: &str) -> Vec<String> {
    let mut names = Vec::new();
    if !matches!(node.kind(), "struct_specifier" | "union_specifier" | "enum_specifier") {
        return names;
    }
    if let Some(name) = node.child_by_field_name("name") {
        names.push(text(name, src).to_string());
    }
    if node.kind() == "enum_specifier" {
        if let Some(body) = node.child_by_field_name("body") {
            let mut cursor = body.walk();
            for e in body.named_children(&mut cursor) {
                if e.kind() == "enumerator" {
                    if let Some(n) = e.child_by_field_name("name") {
                        names.push(text(n, src).to_string());
                    }
                }
            }
        }
    }
    names
}

fn push_unique(names: &mut Vec<String>) {
    let mut seen = BTreeSet::new();
    names.retain(|n| seen.insert(n.clone()));
}

fn collect_declaration(node: Node, src: &str, out: &mut ParsedFile) {
    let mut fn_names = Vec::new();
    let mut var_names = Vec::new();
    let mut cursor = node.walk();
    for decl in node.children_by_field_name("declarator", &mut cursor) {
        if let Some(f) = find_function_declarator(decl) {
            if let Some(n) = f
                .child_by_field_name("declarator")
                .and_then(|d| declarator_name(d, src))
            {
                fn_names.push(n);
            }
        } else if let Some(n) = declarator_name(decl, src) {
            var_names.push(n);
        }
    }
    let body_text = text(node, src).to_string();
    for name in fn_names {
        out.declarations.push(Declaration {
            name,
            file: out.file.path.clone(),
            text: body_text.clone(),
        });
    }
    let is_typedef_like = var_names.is_empty();
    if !is_typedef_like {
        push_unique(&mut var_names);
        out.globals.push(NamedSnippet {
            kind: SnippetKind::Global,
            names: var_names,
            file: out.file.path.clone(),
            text: body_text,
        });
    }
    // `struct s { ... } var;` also defines a record.
    if let Some(ty) = node.child_by_field_name("type") {
        if ty.child_by_field_name("body").is_some() {
            let names = record_names(ty, src);
            if !names.is_empty() {
                out.records.push(NamedSnippet {
                    kind: record_kind(ty.kind()),
                    names,
                    file: out.file.path.clone(),
                    text: text(ty, src).to_string(),
                });
            }
        }
    }
}

/// Descends pointer/array/init/parenthesized declarators to the bound identifier.
fn declarator_name(node: Node, src: &str) -> Option<String> {
    match node.kind() {
        "identifier" | "type_identifier" | "field_identifier" => Some(text(node, src).to_string()),
        "pointer_declarator"
        | "array_declarator"
        | "init_declarator"
        | "parenthesized_declarator"
        | "attributed_declarator"
        | "function_declarator" => node
            .child_by_field_name("declarator")
            .or_else(|| node.named_child(0))
            .and_then(|d| declarator_name(d, src)),
        _ => None,
    }
}

fn find_function_declarator(node: Node) -> Option<Node> {
    match node.kind() {
        "function_declarator" => Some(node),
        "pointer_declarator" | "parenthesized_declarator" | "attributed_declarator" => node
            .child_by_field_name("declarator")
            .or_else(|| node.named_child(0))
            .and_then(find_function_declarator),
        _ => None,
    }
}

fn function_unit(node: Node, src: &str, file: &str) -> Option<FunctionUnit> {
    let declarator = node.child_by_field_name("declarator")?;
    let fdecl = find_function_declarator(declarator)?;
    let name_node = fdecl.child_by_field_name("declarator")?;
    if name_node.kind() != "identifier" {
        return None;
    }
    let name = text(name_node, src).to_string();
    let body = node.child_by_field_name("body")?;
    let signature = src[node.start_byte()..body.start_byte()].trim().to_string();

    let mut refs = UnitRefs::default();
    collect_refs(node, src, &mut refs);
    let mut seen = BTreeSet::new();
    refs.calls.retain(|c| seen.insert(c.clone()));
    refs.identifiers.remove(&name);

    Some(FunctionUnit {
        id: format!("{file}::{name}"),
        name,
        file: file.to_string(),
        source: text(node, src).to_string(),
        signature,
        span: Span {
            start: node.start_byte(),
            end: node.end_byte(),
        },
        refs,
    })
}

fn collect_refs(node: Node, src: &str, refs: &mut UnitRefs) {
    match node.kind() {
        "identifier" | "type_identifier" => {
            refs.identifiers.insert(text(node, src).to_string());
        }
        "call_expression" => {
            if let Some(callee) = node.child_by_field_name("function") {
                if callee.kind() == "identifier" {
                    refs.calls.push(text(callee, src).to_string());
                } else {
                    refs.indirect_calls += 1;
                }
            }
        }
        _ => {}
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_refs(child, src, refs);
    }
}
