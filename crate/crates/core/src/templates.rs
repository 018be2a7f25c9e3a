//! Prompt templates with `{NAME}` placeholders.
//!
//! Built-in templates live in `templates/*.txt`. A template directory given
//! in the run configuration overrides any file it contains; missing files
//! keep the built-in text.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLACEHOLDERS: [&str; 8] = [
    "SOURCE",
    "DEPS",
    "BRIDGE",
    "PRIOR",
    "CODE",
    "DIAGNOSTICS",
    "FINDINGS",
    "SIGNATURE",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub bridge: String,
    pub translate: String,
    pub repair: String,
    pub consistency: String,
    pub consistency_repair: String,
    pub detect: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            bridge: include_str!("../templates/bridge.txt").into(),
            translate: include_str!("../templates/translate.txt").into(),
            repair: include_str!("../templates/repair.txt").into(),
            consistency: include_str!("../templates/consistency.txt").into(),
            consistency_repair: include_str!("../templates/consistency_repair.txt").into(),
            detect: include_str!("../templates/detect.txt").into(),
        }
    }
}

impl TemplateSet {
    pub fn load_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "template directory {} does not exist",
                dir.display()
            )));
        }
        let mut set = Self::default();
        for (file, slot) in [
            ("bridge.txt", &mut set.bridge),
            ("translate.txt", &mut set.translate),
            ("repair.txt", &mut set.repair),
            ("consistency.txt", &mut set.consistency),
            ("consistency_repair.txt", &mut set.consistency_repair),
            ("detect.txt", &mut set.detect),
        ] {
            let path = dir.join(file);
            if path.is_file() {
                *slot = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        for t in [
            &set.bridge,
            &set.translate,
            &set.repair,
            &set.consistency,
            &set.consistency_repair,
            &set.detect,
        ] {
            check_placeholders(t)?;
        }
        Ok(set)
    }
}

fn check_placeholders(template: &str) -> Result<()> {
    for name in placeholders_in(template) {
        if !PLACEHOLDERS.contains(&name) {
            return Err(Error::Config(format!("unknown template placeholder {{{name}}}")));
        }
    }
    Ok(())
}

/// Placeholder names in order of appearance.
pub fn placeholders_in(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_uppercase() || c == '_')
}

/// Single-pass substitution: text inserted for one placeholder is never
/// rescanned, so sources containing `{CODE}` survive intact. Placeholders
/// without a value are left as written.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let name = &after[..close];
            values.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        });
        match replaced {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
