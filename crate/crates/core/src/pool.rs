//! Categorized index of an existing Rust codebase.
//!
//! Every item is filed under one of ten categories. Items inside `impl`
//! blocks point at the owning type through `parent_id`, and type entries list
//! their impl blocks in `impl_ids`. Nested modules are flattened into
//! path-qualified names (`a::b::f`).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use syn::spanned::Spanned;
use walkdir::WalkDir;

use crate::analyzer::SkippedFile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Struct,
    Enum,
    Function,
    Trait,
    Impl,
    Const,
    Static,
    TypeAlias,
    Macro,
    Module,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Struct,
        Category::Enum,
        Category::Function,
        Category::Trait,
        Category::Impl,
        Category::Const,
        Category::Static,
        Category::TypeAlias,
        Category::Macro,
        Category::Module,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Struct => "struct",
            Category::Enum => "enum",
            Category::Function => "function",
            Category::Trait => "trait",
            Category::Impl => "impl",
            Category::Const => "const",
            Category::Static => "static",
            Category::TypeAlias => "type-alias",
            Category::Macro => "macro",
            Category::Module => "module",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Categories that can own impl blocks or associated items.
    pub fn is_type_like(self) -> bool {
        matches!(
            self,
            Category::Struct | Category::Enum | Category::Trait | Category::TypeAlias
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: String,
    pub category: Category,
    pub name: String,
    pub source: String,
    pub file: String,
    /// Owning type for impl blocks and their members, owning trait for trait items.
    pub parent_id: Option<String>,
    /// Impl blocks attached to a type entry.
    pub impl_ids: Vec<String>,
    /// Impl block a member was declared in.
    pub impl_block: Option<String>,
    pub doc: Option<String>,
    /// Field, variant, parameter or member names, for mechanical summaries.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyPool {
    entries: BTreeMap<String, PoolEntry>,
    by_category: BTreeMap<Category, Vec<String>>,
    by_name: BTreeMap<String, Vec<String>>,
    pub skipped: Vec<SkippedFile>,
}

impl DependencyPool {
    pub fn from_entries(entries: impl IntoIterator<Item = PoolEntry>) -> Self {
        let mut pool = Self::default();
        for e in entries {
            pool.entries.insert(e.id.clone(), e);
        }
        pool.reindex();
        pool
    }

    fn reindex(&mut self) {
        self.by_category.clear();
        self.by_name.clear();
        for (id, e) in &self.entries {
            self.by_category.entry(e.category).or_default().push(id.clone());
            self.by_name.entry(e.name.clone()).or_default().push(id.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PoolEntry> {
        self.entries.get(id)
    }

    /// Entries in id order.
    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.values()
    }

    /// Entries matching every provided filter, in id order.
    pub fn lookup(&self, category: Option<Category>, name: Option<&str>) -> Vec<&PoolEntry> {
        let ids: Vec<&String> = match (category, name) {
            (_, Some(n)) => self.by_name.get(n).map(|v| v.iter().collect()).unwrap_or_default(),
            (Some(c), None) => self.by_category.get(&c).map(|v| v.iter().collect()).unwrap_or_default(),
            (None, None) => self.entries.keys().collect(),
        };
        ids.into_iter()
            .filter_map(|id| self.entries.get(id))
            .filter(|e| category.is_none_or(|c| e.category == c))
            .collect()
    }

    /// Checks link consistency and index inversion; returns the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (id, e) in &self.entries {
            if &e.id != id {
                return Err(format!("entry keyed {id} has id {}", e.id));
            }
            if let Some(p) = &e.parent_id {
                let parent = self
                    .entries
                    .get(p)
                    .ok_or_else(|| format!("{id}: dangling parent {p}"))?;
                if !parent.category.is_type_like() {
                    return Err(format!("{id}: parent {p} is a {}", parent.category));
                }
                if e.category == Category::Impl && !parent.impl_ids.contains(id) {
                    return Err(format!("{id}: parent {p} does not list the impl"));
                }
            }
            if let Some(block) = &e.impl_block {
                let imp = self
                    .entries
                    .get(block)
                    .ok_or_else(|| format!("{id}: dangling impl block {block}"))?;
                if imp.parent_id != e.parent_id {
                    return Err(format!("{id}: parent differs from its impl block's"));
                }
            }
            for i in &e.impl_ids {
                let imp = self.entries.get(i).ok_or_else(|| format!("{id}: dangling impl {i}"))?;
                if imp.category != Category::Impl || imp.parent_id.as_deref() != Some(id) {
                    return Err(format!("{id}: impl {i} does not target it"));
                }
            }
        }
        let mut expected = self.clone();
        expected.reindex();
        if expected.by_category != self.by_category || expected.by_name != self.by_name {
            return Err("indexes are not an inversion of entries".into());
        }
        Ok(())
    }

    /// One record per entry: `entry <id>\tcategory=<c>\tname=<n>\tparent=<p|->`.
    pub fn render_dump(&self) -> String {
        let mut out = String::from("# crosswalk dependency pool v1\n");
        for e in self.entries.values() {
            let _ = writeln!(
                out,
                "entry {}\tcategory={}\tname={}\tparent={}",
                e.id,
                e.category,
                e.name,
                e.parent_id.as_deref().unwrap_or("-")
            );
        }
        out
    }
}

/// Category an isolated item's source text parses as.
pub fn categorize_source(text: &str) -> Option<Category> {
    if let Ok(item) = syn::parse_str::<syn::Item>(text) {
        if let Some(c) = item_category(&item) {
            return Some(c);
        }
    }
    if let Ok(item) = syn::parse_str::<syn::ImplItem>(text) {
        match item {
            syn::ImplItem::Fn(_) => return Some(Category::Function),
            syn::ImplItem::Const(_) => return Some(Category::Const),
            syn::ImplItem::Type(_) => return Some(Category::TypeAlias),
            syn::ImplItem::Macro(_) => return Some(Category::Macro),
            _ => {}
        }
    }
    if let Ok(item) = syn::parse_str::<syn::TraitItem>(text) {
        match item {
            syn::TraitItem::Fn(_) => return Some(Category::Function),
            syn::TraitItem::Const(_) => return Some(Category::Const),
            syn::TraitItem::Type(_) => return Some(Category::TypeAlias),
            syn::TraitItem::Macro(_) => return Some(Category::Macro),
            _ => {}
        }
    }
    if let Ok(item) = syn::parse_str::<syn::ForeignItem>(text) {
        match item {
            syn::ForeignItem::Fn(_) => return Some(Category::Function),
            syn::ForeignItem::Static(_) => return Some(Category::Static),
            syn::ForeignItem::Type(_) => return Some(Category::TypeAlias),
            syn::ForeignItem::Macro(_) => return Some(Category::Macro),
            _ => {}
        }
    }
    None
}

fn item_category(item: &syn::Item) -> Option<Category> {
    Some(match item {
        syn::Item::Struct(_) | syn::Item::Union(_) => Category::Struct,
        syn::Item::Enum(_) => Category::Enum,
        syn::Item::Fn(_) => Category::Function,
        syn::Item::Trait(_) | syn::Item::TraitAlias(_) => Category::Trait,
        syn::Item::Impl(_) => Category::Impl,
        syn::Item::Const(_) => Category::Const,
        syn::Item::Static(_) => Category::Static,
        syn::Item::Type(_) => Category::TypeAlias,
        syn::Item::Macro(_) => Category::Macro,
        syn::Item::Mod(_) => Category::Module,
        _ => return None,
    })
}

pub fn build_pool(root: &Path) -> Result<DependencyPool> {
    if !root.is_dir() {
        return Err(Error::MissingRoot(root.to_path_buf()));
    }
    let mut builder = Builder::default();
    let walker = WalkDir::new(root).sort_by_file_name().into_iter().filter_entry(|e| {
        e.depth() == 0 || (e.file_name() != "target" && !e.file_name().to_string_lossy().starts_with('.'))
    });
    for entry in walker {
        let entry = entry.map_err(|e| Error::io(root, e.into()))?;
        if !entry.file_type().is_file() || entry.path().extension().is_none_or(|x| x != "rs") {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .unwrap_or(entry.path())
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        let text = match std::fs::read_to_string(entry.path()) {
            Ok(t) => t,
            Err(e) => {
                builder.skip(&rel, format!("unreadable: {e}"));
                continue;
            }
        };
        match syn::parse_file(&text) {
            Ok(file) => {
                let module = module_path_for(&rel);
                builder.file(&rel, &text, &module, &file.items);
            }
            Err(e) => builder.skip(&rel, format!("parse error: {e}")),
        }
    }
    Ok(builder.finish())
}

/// `src/lib.rs` → [], `src/a/mod.rs` → [a], `src/a/b.rs` → [a, b].
fn module_path_for(rel: &str) -> Vec<String> {
    let rel = rel.strip_prefix("src/").unwrap_or(rel);
    let mut parts: Vec<String> = rel.split('/').map(str::to_string).collect();
    let file = parts.pop().unwrap_or_default();
    let stem = file.trim_end_matches(".rs");
    if !matches!(stem, "lib" | "main" | "mod") {
        parts.push(stem.to_string());
    }
    parts
}

struct PendingImpl {
    impl_id: String,
    self_name: String,
    module: Vec<String>,
    file: String,
    members: Vec<String>,
}

#[derive(Default)]
struct Builder {
    entries: BTreeMap<String, PoolEntry>,
    pending: Vec<PendingImpl>,
    skipped: Vec<SkippedFile>,
}

fn qualify(module: &[String], name: &str) -> String {
    if module.is_empty() {
        name.to_string()
    } else {
        format!("{}::{}", module.join("::"), name)
    }
}

fn doc_of(attrs: &[syn::Attribute]) -> Option<String> {
    let lines: Vec<String> = attrs
        .iter()
        .filter(|a| a.path().is_ident("doc"))
        .filter_map(|a| match &a.meta {
            syn::Meta::NameValue(nv) => match &nv.value {
                syn::Expr::Lit(syn::ExprLit {
                    lit: syn::Lit::Str(s), ..
                }) => Some(s.value().trim().to_string()),
                _ => None,
            },
            _ => None,
        })
        .collect();
    let doc = lines.join("\n").trim().to_string();
    (!doc.is_empty()).then_some(doc)
}

fn fn_params(sig: &syn::Signature) -> Vec<String> {
    sig.inputs
        .iter()
        .map(|arg| match arg {
            syn::FnArg::Receiver(_) => "self".to_string(),
            syn::FnArg::Typed(pt) => match &*pt.pat {
                syn::Pat::Ident(pi) => pi.ident.to_string(),
                _ => "_".to_string(),
            },
        })
        .collect()
}

fn field_names(fields: &syn::Fields) -> Vec<String> {
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| f.ident.as_ref().map_or_else(|| i.to_string(), |id| id.to_string()))
        .collect()
}

/// Last path segment of an impl's self type, if it is a path.
fn self_type_name(ty: &syn::Type) -> Option<String> {
    match ty {
        syn::Type::Path(p) => p.path.segments.last().map(|s| s.ident.to_string()),
        syn::Type::Reference(r) => self_type_name(&r.elem),
        syn::Type::Paren(p) => self_type_name(&p.elem),
        syn::Type::Group(g) => self_type_name(&g.elem),
        _ => None,
    }
}

fn slice(text: &str, span: proc_macro2::Span) -> String {
    text.get(span.byte_range()).unwrap_or_default().to_string()
}

impl Builder {
    fn skip(&mut self, path: &str, reason: String) {
        tracing::warn!(file = %path, %reason, "skipping Rust file");
        self.skipped.push(SkippedFile {
            path: path.to_string(),
            reason,
        });
    }

    fn fresh_id(&self, base: String) -> String {
        if !self.entries.contains_key(&base) {
            return base;
        }
        (2..)
            .map(|n| format!("{base}#{n}"))
            .find(|id| !self.entries.contains_key(id))
            .expect("unbounded suffix search")
    }

    #[allow(clippy::too_many_arguments)]
    fn add(
        &mut self,
        file: &str,
        id_path: String,
        category: Category,
        name: String,
        source: String,
        parent_id: Option<String>,
        impl_block: Option<String>,
        doc: Option<String>,
        members: Vec<String>,
    ) -> String {
        let id = self.fresh_id(format!("{file}::{id_path}"));
        self.entries.insert(
            id.clone(),
            PoolEntry {
                id: id.clone(),
                category,
                name,
                source,
                file: file.to_string(),
                parent_id,
                impl_ids: Vec::new(),
                impl_block,
                doc,
                members,
            },
        );
        id
    }

    fn file(&mut self, file: &str, text: &str, module: &[String], items: &[syn::Item]) {
        for item in items {
            self.item(file, text, module, item);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn named(
        &mut self,
        file: &str,
        text: &str,
        module: &[String],
        item: &syn::Item,
        ident: &syn::Ident,
        category: Category,
        attrs: &[syn::Attribute],
        members: Vec<String>,
    ) -> String {
        let q = qualify(module, &ident.to_string());
        self.add(
            file,
            q.clone(),
            category,
            q,
            slice(text, item.span()),
            None,
            None,
            doc_of(attrs),
            members,
        )
    }

    fn item(&mut self, file: &str, text: &str, module: &[String], item: &syn::Item) {
        match item {
            syn::Item::Struct(s) => {
                self.named(
                    file,
                    text,
                    module,
                    item,
                    &s.ident,
                    Category::Struct,
                    &s.attrs,
                    field_names(&s.fields),
                );
            }
            syn::Item::Union(u) => {
                let members = u
                    .fields
                    .named
                    .iter()
                    .filter_map(|f| f.ident.as_ref().map(|i| i.to_string()))
                    .collect();
                self.named(file, text, module, item, &u.ident, Category::Struct, &u.attrs, members);
            }
            syn::Item::Enum(e) => {
                let members = e.variants.iter().map(|v| v.ident.to_string()).collect();
                self.named(file, text, module, item, &e.ident, Category::Enum, &e.attrs, members);
            }
            syn::Item::Fn(f) => {
                self.named(
                    file,
                    text,
                    module,
                    item,
                    &f.sig.ident,
                    Category::Function,
                    &f.attrs,
                    fn_params(&f.sig),
                );
            }
            syn::Item::Const(c) => {
                self.named(
                    file,
                    text,
                    module,
                    item,
                    &c.ident,
                    Category::Const,
                    &c.attrs,
                    Vec::new(),
                );
            }
            syn::Item::Static(s) => {
                self.named(
                    file,
                    text,
                    module,
                    item,
                    &s.ident,
                    Category::Static,
                    &s.attrs,
                    Vec::new(),
                );
            }
            syn::Item::Type(t) => {
                self.named(
                    file,
                    text,
                    module,
                    item,
                    &t.ident,
                    Category::TypeAlias,
                    &t.attrs,
                    Vec::new(),
                );
            }
            syn::Item::TraitAlias(t) => {
                self.named(
                    file,
                    text,
                    module,
                    item,
                    &t.ident,
                    Category::Trait,
                    &t.attrs,
                    Vec::new(),
                );
            }
            syn::Item::Trait(t) => {
                let members = t
                    .items
                    .iter()
                    .filter_map(|ti| match ti {
                        syn::TraitItem::Fn(f) => Some(f.sig.ident.to_string()),
                        syn::TraitItem::Const(c) => Some(c.ident.to_string()),
                        syn::TraitItem::Type(ty) => Some(ty.ident.to_string()),
                        _ => None,
                    })
                    .collect();
                let trait_id = self.named(file, text, module, item, &t.ident, Category::Trait, &t.attrs, members);
                let trait_q = qualify(module, &t.ident.to_string());
                for ti in &t.items {
                    let (ident, category, attrs, members) = match ti {
                        syn::TraitItem::Fn(f) => (&f.sig.ident, Category::Function, &f.attrs, fn_params(&f.sig)),
                        syn::TraitItem::Const(c) => (&c.ident, Category::Const, &c.attrs, Vec::new()),
                        syn::TraitItem::Type(ty) => (&ty.ident, Category::TypeAlias, &ty.attrs, Vec::new()),
                        _ => continue,
                    };
                    self.add(
                        file,
                        format!("{trait_q}::{ident}"),
                        category,
                        ident.to_string(),
                        slice(text, ti.span()),
                        Some(trait_id.clone()),
                        None,
                        doc_of(attrs),
                        members,
                    );
                }
            }
            syn::Item::Impl(imp) => self.impl_block(file, text, module, item, imp),
            syn::Item::Macro(m) => {
                let name = match &m.ident {
                    Some(ident) => qualify(module, &ident.to_string()),
                    None => m
                        .mac
                        .path
                        .segments
                        .last()
                        .map(|s| s.ident.to_string())
                        .unwrap_or_else(|| "macro".into()),
                };
                self.add(
                    file,
                    name.clone(),
                    Category::Macro,
                    name,
                    slice(text, item.span()),
                    None,
                    None,
                    doc_of(&m.attrs),
                    Vec::new(),
                );
            }
            syn::Item::Mod(m) => {
                let q = qualify(module, &m.ident.to_string());
                let members = m
                    .content
                    .as_ref()
                    .map(|(_, items)| items.len())
                    .map(|n| vec![format!("{n} items")])
                    .unwrap_or_default();
                self.add(
                    file,
                    q.clone(),
                    Category::Module,
                    q,
                    slice(text, item.span()),
                    None,
                    None,
                    doc_of(&m.attrs),
                    members,
                );
                if let Some((_, items)) = &m.content {
                    let mut inner = module.to_vec();
                    inner.push(m.ident.to_string());
                    self.file(file, text, &inner, items);
                }
            }
            syn::Item::ForeignMod(fm) => {
                for fi in &fm.items {
                    let (ident, category, attrs, members) = match fi {
                        syn::ForeignItem::Fn(f) => (&f.sig.ident, Category::Function, &f.attrs, fn_params(&f.sig)),
                        syn::ForeignItem::Static(s) => (&s.ident, Category::Static, &s.attrs, Vec::new()),
                        syn::ForeignItem::Type(t) => (&t.ident, Category::TypeAlias, &t.attrs, Vec::new()),
                        _ => continue,
                    };
                    let q = qualify(module, &ident.to_string());
                    self.add(
                        file,
                        q.clone(),
                        category,
                        q,
                        slice(text, fi.span()),
                        None,
                        None,
                        doc_of(attrs),
                        members,
                    );
                }
            }
            // `use`, `extern crate` and verbatim tokens are not retrieval targets.
            _ => {}
        }
    }

    fn impl_block(&mut self, file: &str, text: &str, module: &[String], item: &syn::Item, imp: &syn::ItemImpl) {
        let self_src = slice(text, imp.self_ty.span());
        let header = match &imp.trait_ {
            Some((bang, path, _)) => {
                let neg = if bang.is_some() { "!" } else { "" };
                format!("impl {neg}{} for {self_src}", slice(text, path.span()))
            }
            None => format!("impl {self_src}"),
        };
        let q = qualify(module, &header);
        let members = imp
            .items
            .iter()
            .filter_map(|ii| match ii {
                syn::ImplItem::Fn(f) => Some(f.sig.ident.to_string()),
                syn::ImplItem::Const(c) => Some(c.ident.to_string()),
                syn::ImplItem::Type(t) => Some(t.ident.to_string()),
                _ => None,
            })
            .collect();
        let impl_id = self.add(
            file,
            q.clone(),
            Category::Impl,
            q,
            slice(text, item.span()),
            None,
            None,
            doc_of(&imp.attrs),
            members,
        );
        let Some(self_name) = self_type_name(&imp.self_ty) else {
            return;
        };
        let owner_q = qualify(module, &self_name);
        let mut member_ids = Vec::new();
        for ii in &imp.items {
            let (ident, category, attrs, params) = match ii {
                syn::ImplItem::Fn(f) => (&f.sig.ident, Category::Function, &f.attrs, fn_params(&f.sig)),
                syn::ImplItem::Const(c) => (&c.ident, Category::Const, &c.attrs, Vec::new()),
                syn::ImplItem::Type(t) => (&t.ident, Category::TypeAlias, &t.attrs, Vec::new()),
                _ => continue,
            };
            let id = self.add(
                file,
                format!("{owner_q}::{ident}"),
                category,
                ident.to_string(),
                slice(text, ii.span()),
                None,
                Some(impl_id.clone()),
                doc_of(attrs),
                params,
            );
            member_ids.push(id);
        }
        self.pending.push(PendingImpl {
            impl_id,
            self_name,
            module: module.to_vec(),
            file: file.to_string(),
            members: member_ids,
        });
    }

    /// Links impls to their self type: same module first, then same file, then
    /// a unique match anywhere. Impls on foreign types stay unlinked.
    fn resolve_impls(&mut self) {
        let pending = std::mem::take(&mut self.pending);
        for p in pending {
            let candidates: Vec<&PoolEntry> = self
                .entries
                .values()
                .filter(|e| {
                    matches!(
                        e.category,
                        Category::Struct | Category::Enum | Category::TypeAlias | Category::Trait
                    ) && e.parent_id.is_none()
                        && e.name.rsplit("::").next() == Some(p.self_name.as_str())
                })
                .collect();
            let wanted = qualify(&p.module, &p.self_name);
            let owner = candidates
                .iter()
                .find(|e| e.name == wanted)
                .or_else(|| {
                    let same_file: Vec<_> = candidates.iter().filter(|e| e.file == p.file).collect();
                    (same_file.len() == 1).then(|| same_file[0])
                })
                .or_else(|| (candidates.len() == 1).then(|| &candidates[0]))
                .map(|e| e.id.clone());
            let Some(owner) = owner else { continue };
            if let Some(e) = self.entries.get_mut(&owner) {
                e.impl_ids.push(p.impl_id.clone());
            }
            for id in std::iter::once(&p.impl_id).chain(&p.members) {
                if let Some(e) = self.entries.get_mut(id) {
                    e.parent_id = Some(owner.clone());
                }
            }
        }
    }

    fn finish(mut self) -> DependencyPool {
        self.resolve_impls();
        let mut pool = DependencyPool {
            entries: self.entries,
            skipped: self.skipped,
            ..Default::default()
        };
        pool.reindex();
        pool
    }
}
