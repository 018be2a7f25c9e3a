//! Deletion probes: a function is covered when replacing its body with a
//! panic makes the repository's test suite fail.
//!
//! Probes mutate the repository in place, so they run strictly one at a
//! time. The original file is restored by a drop guard and the repository
//! hash is checked after every probe.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use proc_macro2::LineColumn;
use sha2::{Digest, Sha256};
use syn::spanned::Spanned;
use syn::{ImplItem, Item};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::refiner::run_with_timeout;

const PROBE_BODY: &str = "{ unimplemented!(\"coverage probe\") }";

/// SHA-256 over every file path and content under `root`, `target/` and
/// `.git/` excluded.
pub fn repo_hash(root: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let walker = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !matches!(e.file_name().to_str(), Some("target" | ".git")));
    for entry in walker {
        let entry = entry.map_err(|e| Error::Config(format!("walking {}: {e}", root.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let bytes = std::fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn offset_of(text: &str, at: LineColumn) -> usize {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i + 1 == at.line {
            return offset + line.char_indices().nth(at.column).map(|(b, _)| b).unwrap_or(line.len());
        }
        offset += line.len();
    }
    text.len()
}

/// Byte range of the body of `function` in `text`. `function` is a plain
/// name for free functions or `Type::name` for inherent and trait methods.
pub fn body_range(text: &str, function: &str) -> Option<(usize, usize)> {
    let file = syn::parse_file(text).ok()?;
    let (owner, name) = match function.rsplit_once("::") {
        Some((o, n)) => (Some(o), n),
        None => (None, function),
    };
    let span = find_body(&file.items, owner, name)?;
    Some((offset_of(text, span.start()), offset_of(text, span.end())))
}

fn find_body(items: &[Item], owner: Option<&str>, name: &str) -> Option<proc_macro2::Span> {
    for item in items {
        match item {
            Item::Fn(f) if owner.is_none() && f.sig.ident == name => return Some(f.block.span()),
            Item::Impl(imp) => {
                let self_name = match &*imp.self_ty {
                    syn::Type::Path(p) => p.path.segments.last().map(|s| s.ident.to_string()),
                    _ => None,
                };
                if owner.is_some() && self_name.as_deref() != owner {
                    continue;
                }
                for it in &imp.items {
                    if let ImplItem::Fn(m) = it {
                        if m.sig.ident == name {
                            return Some(m.block.span());
                        }
                    }
                }
            }
            Item::Mod(m) => {
                if let Some((_, inner)) = &m.content {
                    if let Some(s) = find_body(inner, owner, name) {
                        return Some(s);
                    }
                }
            }
            _ => {}
        }
    }
    None
}

struct Restore {
    path: PathBuf,
    original: Vec<u8>,
}

impl Drop for Restore {
    fn drop(&mut self) {
        if let Err(e) = std::fs::write(&self.path, &self.original) {
            tracing::error!(path = %self.path.display(), "failed to restore probed file: {e}");
        }
    }
}

/// A repository whose baseline test suite has been seen to pass.
pub struct CoverageProbe {
    repo: PathBuf,
    target_dir: tempfile::TempDir,
    timeout: Duration,
    had_lockfile: bool,
    baseline_hash: String,
}

impl CoverageProbe {
    /// Runs the baseline suite; refuses the repository if it already fails.
    pub fn new(repo: &Path, timeout: Duration) -> Result<Self> {
        if !repo.join("Cargo.toml").is_file() {
            return Err(Error::ProbeRefused(format!("{} has no Cargo.toml", repo.display())));
        }
        let target_dir = tempfile::Builder::new()
            .prefix("crosswalk-probe-")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let probe = Self {
            repo: repo.to_path_buf(),
            target_dir,
            timeout,
            had_lockfile: repo.join("Cargo.lock").exists(),
            baseline_hash: repo_hash(repo)?,
        };
        let passed = probe.suite_passes();
        probe.tidy();
        if !passed? {
            return Err(Error::ProbeRefused("baseline test suite fails".into()));
        }
        Ok(probe)
    }

    fn suite_passes(&self) -> Result<bool> {
        let mut cmd = Command::new("cargo");
        cmd.args(["test", "--quiet", "--offline"])
            .env("CARGO_TARGET_DIR", self.target_dir.path())
            .current_dir(&self.repo);
        let out = run_with_timeout(cmd, self.timeout).map_err(|e| Error::Toolchain(format!("cargo: {e}")))?;
        Ok(out.status_ok && !out.timed_out)
    }

    /// Removes a lockfile that cargo created during a run.
    fn tidy(&self) {
        if !self.had_lockfile {
            let _ = std::fs::remove_file(self.repo.join("Cargo.lock"));
        }
    }

    /// Whether the suite notices `function` in `file` (relative to the repo)
    /// being replaced by a panic.
    pub fn probe(&self, file: &Path, function: &str) -> Result<bool> {
        let path = self.repo.join(file);
        let original = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let text = String::from_utf8(original.clone()).map_err(|_| Error::Parse {
            path: file.display().to_string(),
            message: "not UTF-8".into(),
        })?;
        let (start, end) = body_range(&text, function).ok_or_else(|| Error::Parse {
            path: file.display().to_string(),
            message: format!("function `{function}` not found"),
        })?;
        let covered = {
            let _guard = Restore {
                path: path.clone(),
                original,
            };
            let mut mutated = String::with_capacity(text.len());
            mutated.push_str(&text[..start]);
            mutated.push_str(PROBE_BODY);
            mutated.push_str(&text[end..]);
            std::fs::write(&path, mutated).map_err(|e| Error::io(&path, e))?;
            let passes = self.suite_passes();
            self.tidy();
            !passes?
        };
        let after = repo_hash(&self.repo)?;
        if after != self.baseline_hash {
            return Err(Error::Contract(format!(
                "repository {} changed during coverage probe",
                self.repo.display()
            )));
        }
        Ok(covered)
    }

    pub fn baseline_hash(&self) -> &str {
        &self.baseline_hash
    }
}

/// One-shot probe of a single function.
pub fn identify_test_coverage(repo: &Path, file: &Path, function: &str) -> Result<bool> {
    CoverageProbe::new(repo, Duration::from_secs(300))?.probe(file, function)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locates_function_bodies() {
        let text = "pub fn a() -> u8 { 1 }\nstruct S;\nimpl S {\n    fn a(&self) -> u8 {\n        2\n    }\n}\n";
        let (s, e) = body_range(text, "a").unwrap();
        assert_eq!(&text[s..e], "{ 1 }");
        let (s, e) = body_range(text, "S::a").unwrap();
        assert_eq!(&text[s..e], "{\n        2\n    }");
        assert!(body_range(text, "missing").is_none());
    }

    #[test]
    fn hash_ignores_target_and_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.rs"), "x").unwrap();
        let h = repo_hash(dir.path()).unwrap();
        std::fs::create_dir(dir.path().join("target")).unwrap();
        std::fs::write(dir.path().join("target/junk"), "y").unwrap();
        assert_eq!(repo_hash(dir.path()).unwrap(), h);
        std::fs::write(dir.path().join("a.rs"), "z").unwrap();
        assert_ne!(repo_hash(dir.path()).unwrap(), h);
    }

    #[test]
    fn failing_baseline_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("Cargo.toml"),
            "[package]\nname = \"probe_fail\"\nversion = \"0.1.0\"\nedition = \"2021\"\n[lib]\npath = \"lib.rs\"\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("lib.rs"), "#[test]\nfn t() { panic!() }\n").unwrap();
        let err = CoverageProbe::new(dir.path(), Duration::from_secs(120)).err().unwrap();
        assert!(matches!(err, Error::ProbeRefused(_)));
        assert!(!dir.path().join("Cargo.lock").exists());
    }
}
