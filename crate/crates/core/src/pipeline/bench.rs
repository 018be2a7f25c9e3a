//! Benchmark specs: reference tests and reference translations per unit.
//!
//! ```toml
//! name = "fixture"
//!
//! [[unit]]
//! id = "src/buf.c::buf_len"
//! tests_file = "tests/buf_len.rs"    # or inline: tests = "..."
//! reference_file = "ref/buf_len.rs"  # or inline: reference = "..."
//! ```
//!
//! Tests are `#[test]` functions compiled next to the unit with `use super::*`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchUnit {
    pub id: String,
    #[serde(default)]
    pub tests: Option<String>,
    #[serde(default)]
    pub tests_file: Option<PathBuf>,
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub reference_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default, rename = "unit")]
    pub units: Vec<BenchUnit>,
}

fn inline_or_file(inline: &Option<String>, file: &Option<PathBuf>) -> Result<Option<String>> {
    match (inline, file) {
        (Some(text), None) => Ok(Some(text.clone())),
        (None, Some(path)) => std::fs::read_to_string(path).map(Some).map_err(|e| Error::io(path, e)),
        (None, None) => Ok(None),
        (Some(_), Some(_)) => Err(Error::Config("give either inline text or a file, not both".into())),
    }
}

impl BenchmarkSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("benchmark spec: {e}")))
    }

    /// Reads a spec; file references resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for u in &mut spec.units {
            for f in [&mut u.tests_file, &mut u.reference_file].into_iter().flatten() {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        }
        Ok(spec)
    }

    pub fn tests(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for u in &self.units {
            if let Some(t) = inline_or_file(&u.tests, &u.tests_file)? {
                out.insert(u.id.clone(), t);
            }
        }
        Ok(out)
    }

    pub fn references(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for u in &self.units {
            if let Some(r) = inline_or_file(&u.reference, &u.reference_file)? {
                out.insert(u.id.clone(), r);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_and_file_units() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t.rs"), "#[test] fn t() {}").unwrap();
        let path = dir.path().join("bench.toml");
        std::fs::write(
            &path,
            "name = \"b\"\n[[unit]]\nid = \"a.c::f\"\ntests_file = \"t.rs\"\nreference = \"fn f() {}\"\n[[unit]]\nid = \"a.c::g\"\n",
        )
        .unwrap();
        let spec = BenchmarkSpec::load(&path).unwrap();
        assert_eq!(spec.tests().unwrap()["a.c::f"], "#[test] fn t() {}");
        assert_eq!(spec.references().unwrap().len(), 1);
        assert!(!spec.tests().unwrap().contains_key("a.c::g"));
    }
}
