//! Compiling a unit inside its scaffold and reading the diagnostics.
//!
//! The scaffold is a single library crate: the pool crate glob-imported
//! through `--extern`, hoisted `use` lines, the translations the unit depends
//! on (verbatim or stubbed), then the unit's own code. Only errors count;
//! warnings, notes and the trailing "aborting due to" summary do not.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use syn::spanned::Spanned;

use crate::error::{Error, Result};

pub const MAX_PROMPT_DIAGNOSTICS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toolchain {
    pub rustc: PathBuf,
    pub timeout: Duration,
    pub edition: String,
}

impl Default for Toolchain {
    fn default() -> Self {
        Self {
            rustc: PathBuf::from("rustc"),
            timeout: Duration::from_secs(60),
            edition: "2021".into(),
        }
    }
}

impl Toolchain {
    /// Runs `rustc --version`; a missing or broken compiler is fatal.
    pub fn preflight(&self) -> Result<String> {
        let out = Command::new(&self.rustc)
            .arg("--version")
            .output()
            .map_err(|e| Error::Toolchain(format!("{}: {e}", self.rustc.display())))?;
        if !out.status.success() {
            return Err(Error::Toolchain(format!(
                "{} --version exited with {}",
                self.rustc.display(),
                out.status
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Note,
    Help,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: Option<String>,
    pub severity: Severity,
    pub message: String,
    /// 1-based line relative to the unit's code, when the primary span falls inside it.
    pub unit_line: Option<usize>,
    /// 1-based line in the assembled scaffold.
    pub line: Option<usize>,
    pub source_line: Option<String>,
}

impl Diagnostic {
    pub fn synthetic(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: Some(code.into()),
            severity: Severity::Error,
            message: message.into(),
            unit_line: None,
            line: None,
            source_line: None,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileReport {
    pub success: bool,
    pub n_err: usize,
    pub diagnostics: Vec<Diagnostic>,
    pub elapsed_ms: u64,
}

impl CompileReport {
    /// Report for an attempt that never reached the compiler.
    pub fn synthetic(diagnostic: Diagnostic) -> Self {
        Self {
            success: false,
            n_err: 1,
            diagnostics: vec![diagnostic],
            elapsed_ms: 0,
        }
    }

    pub fn error_codes(&self) -> Vec<&str> {
        self.diagnostics
            .iter()
            .filter(|d| d.is_error())
            .filter_map(|d| d.code.as_deref())
            .collect()
    }
}

/// Error diagnostics for a repair prompt: code, message and offending line, at most 20.
pub fn format_diagnostics(report: &CompileReport) -> String {
    let mut out = Vec::new();
    for d in report
        .diagnostics
        .iter()
        .filter(|d| d.is_error())
        .take(MAX_PROMPT_DIAGNOSTICS)
    {
        let mut s = match &d.code {
            Some(c) => format!("error[{c}]: {}", d.message),
            None => format!("error: {}", d.message),
        };
        match (d.unit_line, d.line) {
            (Some(l), _) => s.push_str(&format!("\n  --> line {l}")),
            (None, Some(l)) => s.push_str(&format!("\n  --> scaffold line {l}")),
            _ => {}
        }
        if let Some(src) = &d.source_line {
            s.push_str(&format!("\n   | {}", src.trim_end()));
        }
        out.push(s);
    }
    let hidden = report.n_err.saturating_sub(MAX_PROMPT_DIAGNOSTICS);
    if hidden > 0 {
        out.push(format!("... and {hidden} more errors"));
    }
    out.join("\n\n")
}

#[derive(Deserialize)]
struct RawDiagnostic {
    message: String,
    #[serde(default)]
    code: Option<RawCode>,
    level: String,
    #[serde(default)]
    spans: Vec<RawSpan>,
}

#[derive(Deserialize)]
struct RawCode {
    code: String,
}

#[derive(Deserialize)]
struct RawSpan {
    line_start: usize,
    is_primary: bool,
    #[serde(default)]
    text: Vec<RawText>,
}

#[derive(Deserialize)]
struct RawText {
    text: String,
}

/// Parses rustc's JSON diagnostic stream. `unit_lines` is the 1-based,
/// inclusive line range of the unit's code inside the scaffold.
pub fn parse_diagnostics(stream: &str, unit_lines: Option<(usize, usize)>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for line in stream.lines().filter(|l| l.trim_start().starts_with('{')) {
        let Ok(raw) = serde_json::from_str::<RawDiagnostic>(line) else {
            continue;
        };
        let severity = match raw.level.as_str() {
            "error" | "error: internal compiler error" => Severity::Error,
            "warning" => Severity::Warning,
            "help" => Severity::Help,
            _ => Severity::Note,
        };
        if severity == Severity::Error && raw.code.is_none() && raw.message.starts_with("aborting due to") {
            continue;
        }
        let primary = raw.spans.iter().find(|s| s.is_primary);
        let line_no = primary.map(|s| s.line_start);
        let unit_line = match (line_no, unit_lines) {
            (Some(l), Some((a, b))) if l >= a && l <= b => Some(l - a + 1),
            _ => None,
        };
        out.push(Diagnostic {
            code: raw.code.map(|c| c.code),
            severity,
            message: raw.message,
            unit_line,
            line: line_no,
            source_line: primary.and_then(|s| s.text.first()).map(|t| t.text.clone()),
        });
    }
    out
}

/// A compiled crate the scaffold links against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolLink {
    pub crate_name: String,
    pub rmeta: PathBuf,
    /// Linkable library, for test executables.
    pub rlib: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaffoldPiece {
    pub unit_id: String,
    pub code: String,
    /// Function bodies replaced with `unimplemented!()`.
    pub stub: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scaffold {
    pub pool: Option<PoolLink>,
    pub pieces: Vec<ScaffoldPiece>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembled {
    pub text: String,
    /// 1-based inclusive line range of the unit's code.
    pub unit_lines: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ItemKey {
    Use(String),
    Type(String),
    Value(String),
    Macro(String),
    Other(String),
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn item_key(item: &syn::Item, text: &str) -> ItemKey {
    use syn::Item::*;
    match item {
        Use(_) => ItemKey::Use(squash(text)),
        Struct(s) => ItemKey::Type(s.ident.to_string()),
        Enum(e) => ItemKey::Type(e.ident.to_string()),
        Union(u) => ItemKey::Type(u.ident.to_string()),
        Trait(t) => ItemKey::Type(t.ident.to_string()),
        Type(t) => ItemKey::Type(t.ident.to_string()),
        Mod(m) => ItemKey::Type(m.ident.to_string()),
        Fn(f) => ItemKey::Value(f.sig.ident.to_string()),
        Const(c) => ItemKey::Value(c.ident.to_string()),
        Static(s) => ItemKey::Value(s.ident.to_string()),
        Macro(m) => match &m.ident {
            Some(id) => ItemKey::Macro(id.to_string()),
            None => ItemKey::Other(squash(text)),
        },
        _ => ItemKey::Other(squash(text)),
    }
}

/// Top-level items with their source text, or `None` if the code does not parse.
fn split_items(code: &str) -> Option<Vec<(ItemKey, String)>> {
    let file = syn::parse_file(code).ok()?;
    Some(
        file.items
            .iter()
            .map(|item| {
                let text = code.get(item.span().byte_range()).unwrap_or_default().to_string();
                (item_key(item, &text), text)
            })
            .collect(),
    )
}

/// Replaces every function body (free and in impls) with `unimplemented!()`.
/// Returns `None` when the code does not parse.
pub fn stub_code(code: &str) -> Option<String> {
    let file = syn::parse_file(code).ok()?;
    let mut bodies: Vec<std::ops::Range<usize>> = Vec::new();
    for item in &file.items {
        match item {
            syn::Item::Fn(f) => bodies.push(f.block.span().byte_range()),
            syn::Item::Impl(imp) => {
                for ii in &imp.items {
                    if let syn::ImplItem::Fn(f) = ii {
                        bodies.push(f.block.span().byte_range());
                    }
                }
            }
            _ => {}
        }
    }
    let mut out = String::with_capacity(code.len());
    let mut pos = 0;
    for r in bodies {
        out.push_str(&code[pos..r.start]);
        out.push_str("{ unimplemented!() }");
        pos = r.end;
    }
    out.push_str(&code[pos..]);
    Some(out)
}

/// Assembles the scaffold crate around `code`. Items the unit defines take
/// precedence over same-named items from dependencies; repeated `use` lines
/// and repeated definitions across dependencies are emitted once.
pub fn assemble(scaffold: &Scaffold, unit_id: &str, code: &str) -> Assembled {
    let mut claimed: BTreeSet<ItemKey> = split_items(code)
        .map(|items| items.into_iter().map(|(k, _)| k).collect())
        .unwrap_or_default();
    let mut uses: Vec<String> = Vec::new();
    let mut bodies: Vec<String> = Vec::new();
    for piece in &scaffold.pieces {
        let flag = if piece.stub { " (stub)" } else { "" };
        let mut body = format!("// from {}{flag}\n", piece.unit_id);
        match split_items(&piece.code) {
            Some(items) => {
                for (key, text) in items {
                    if !claimed.insert(key.clone()) {
                        continue;
                    }
                    match key {
                        ItemKey::Use(_) => uses.push(text),
                        _ => {
                            body.push_str(&text);
                            body.push('\n');
                        }
                    }
                }
            }
            None => {
                body.push_str(&piece.code);
                body.push('\n');
            }
        }
        bodies.push(body);
    }
    let mut text = String::from("// scaffold\n");
    if let Some(pool) = &scaffold.pool {
        text.push_str(&format!("#[allow(unused_imports)]\nuse {}::*;\n", pool.crate_name));
    }
    for u in &uses {
        text.push_str(u);
        text.push('\n');
    }
    for b in &bodies {
        text.push_str(b);
    }
    text.push_str(&format!("// unit {unit_id}\n"));
    let start = text.lines().count() + 1;
    text.push_str(code);
    if !code.ends_with('\n') {
        text.push('\n');
    }
    let end = (start + code.lines().count()).saturating_sub(1).max(start);
    Assembled {
        text,
        unit_lines: (start, end),
    }
}

pub(crate) struct ProcessOutput {
    pub status_ok: bool,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
}

/// Runs a command with a wall-clock limit, draining both pipes.
pub(crate) fn run_with_timeout(mut cmd: Command, timeout: Duration) -> std::io::Result<ProcessOutput> {
    let mut child = cmd
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let started = Instant::now();
    let (status_ok, timed_out) = loop {
        if let Some(status) = child.try_wait()? {
            break (status.success(), false);
        }
        if started.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            break (false, true);
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    Ok(ProcessOutput {
        status_ok,
        stdout: out_reader.join().unwrap_or_default(),
        stderr: err_reader.join().unwrap_or_default(),
        timed_out,
    })
}

pub(crate) fn rustc_command(toolchain: &Toolchain, scaffold: &Scaffold, link: bool) -> Command {
    let mut cmd = Command::new(&toolchain.rustc);
    cmd.arg("--edition").arg(&toolchain.edition);
    if let Some(pool) = &scaffold.pool {
        let lib = if link { &pool.rlib } else { &pool.rmeta };
        cmd.arg("--extern")
            .arg(format!("{}={}", pool.crate_name, lib.display()));
        if let Some(dir) = pool.rmeta.parent() {
            cmd.arg("-L").arg(dir);
        }
    }
    cmd
}

/// Compiles `code` in the scaffold as a library (metadata only). The temp
/// directory is removed unless `keep_artifacts`, in which case its path is
/// logged.
pub fn compile_unit(
    code: &str,
    unit_id: &str,
    scaffold: &Scaffold,
    toolchain: &Toolchain,
    keep_artifacts: bool,
) -> Result<CompileReport> {
    let dir = tempfile::Builder::new()
        .prefix("crosswalk-unit-")
        .tempdir()
        .map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let assembled = assemble(scaffold, unit_id, code);
    let src = dir.path().join("lib.rs");
    std::fs::write(&src, &assembled.text).map_err(|e| Error::io(&src, e))?;
    let mut cmd = rustc_command(toolchain, scaffold, false);
    cmd.args(["--crate-type", "lib", "--crate-name", "unit", "--emit=metadata"])
        .args(["--error-format=json", "--cap-lints", "allow", "-o"])
        .arg(dir.path().join("libunit.rmeta"))
        .arg(&src)
        .current_dir(dir.path());
    let started = Instant::now();
    let out = run_with_timeout(cmd, toolchain.timeout)
        .map_err(|e| Error::Toolchain(format!("{}: {e}", toolchain.rustc.display())))?;
    let elapsed_ms = started.elapsed().as_millis() as u64;
    let mut diagnostics = parse_diagnostics(&out.stderr, Some(assembled.unit_lines));
    if out.timed_out {
        diagnostics.push(Diagnostic::synthetic(
            "timeout",
            format!("compiler did not finish within {:?}", toolchain.timeout),
        ));
    }
    let n_err = diagnostics.iter().filter(|d| d.is_error()).count();
    if keep_artifacts {
        let kept = dir.keep();
        tracing::info!(unit = %unit_id, dir = %kept.display(), "kept compile workspace");
    }
    Ok(CompileReport {
        success: n_err == 0 && out.status_ok,
        n_err,
        diagnostics,
        elapsed_ms,
    })
}

fn crate_name_for(root: &Path) -> String {
    let from_manifest = std::fs::read_to_string(root.join("Cargo.toml"))
        .ok()
        .and_then(|t| t.parse::<toml::Table>().ok())
        .and_then(|t| t.get("package")?.get("name")?.as_str().map(str::to_string));
    let raw = from_manifest.unwrap_or_else(|| {
        root.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "pool".into())
    });
    let name: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if name.is_empty() || name.starts_with(|c: char| c.is_ascii_digit()) {
        format!("pool_{name}")
    } else {
        name
    }
}

/// Compiles the pool crate to metadata under `out_dir`. Returns `None` (with
/// a warning) when there is no library root or it does not build on its own.
pub fn build_pool_crate(pool_root: &Path, out_dir: &Path, toolchain: &Toolchain) -> Option<PoolLink> {
    let lib = ["src/lib.rs", "lib.rs"]
        .iter()
        .map(|p| pool_root.join(p))
        .find(|p| p.is_file())?;
    let crate_name = crate_name_for(pool_root);
    if std::fs::create_dir_all(out_dir).is_err() {
        return None;
    }
    let mut cmd = Command::new(&toolchain.rustc);
    cmd.arg("--edition")
        .arg(&toolchain.edition)
        .args([
            "--crate-type",
            "lib",
            "--crate-name",
            &crate_name,
            "--emit=metadata,link",
        ])
        .args(["--error-format=json", "--cap-lints", "allow", "--out-dir"])
        .arg(out_dir)
        .arg(&lib);
    let canonical = |p: PathBuf| p.canonicalize().unwrap_or(p);
    match run_with_timeout(cmd, toolchain.timeout) {
        Ok(out) if out.status_ok => Some(PoolLink {
            rmeta: canonical(out_dir.join(format!("lib{crate_name}.rmeta"))),
            rlib: canonical(out_dir.join(format!("lib{crate_name}.rlib"))),
            crate_name,
        }),
        Ok(out) => {
            let errors = parse_diagnostics(&out.stderr, None)
                .into_iter()
                .filter(Diagnostic::is_error)
                .count();
            tracing::warn!(root = %pool_root.display(), errors, "pool crate does not build alone; compiling without it");
            None
        }
        Err(e) => {
            tracing::warn!(error = %e, "could not run the compiler on the pool crate");
            None
        }
    }
}
