//! Running reference tests against a translated unit.
//!
//! Tests are appended to the scaffold as a `#[cfg(test)]` module with
//! `use super::*`, built with `rustc --test` and run single-threaded.

use std::process::Command;

use serde::{Deserialize, Serialize};

use super::compile::{assemble, parse_diagnostics, run_with_timeout, rustc_command, Diagnostic, Scaffold, Toolchain};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub passed: usize,
    pub failed: usize,
    pub total: usize,
    /// Set when the tests could not be built or run to completion.
    pub harness_error: Option<String>,
}

impl TestOutcome {
    pub fn all_passed(&self) -> bool {
        self.harness_error.is_none() && self.total > 0 && self.failed == 0
    }

    fn error(msg: impl Into<String>) -> Self {
        Self {
            harness_error: Some(msg.into()),
            ..Default::default()
        }
    }
}

/// Counts `test <name> ... ok` and `... FAILED` lines of libtest output.
pub fn parse_test_output(stdout: &str) -> (usize, usize) {
    let mut passed = 0;
    let mut failed = 0;
    for line in stdout.lines() {
        let Some(rest) = line.strip_prefix("test ") else {
            continue;
        };
        if rest.ends_with(" ... ok") {
            passed += 1;
        } else if rest.ends_with(" ... FAILED") {
            failed += 1;
        }
    }
    (passed, failed)
}

pub fn run_unit_tests(
    code: &str,
    tests: &str,
    unit_id: &str,
    scaffold: &Scaffold,
    toolchain: &Toolchain,
) -> TestOutcome {
    let dir = match tempfile::Builder::new().prefix("crosswalk-tests-").tempdir() {
        Ok(d) => d,
        Err(e) => return TestOutcome::error(format!("temp dir: {e}")),
    };
    let mut text = assemble(scaffold, unit_id, code).text;
    text.push_str("\n#[cfg(test)]\nmod reference_tests {\n#[allow(unused_imports)]\nuse super::*;\n");
    text.push_str(tests);
    text.push_str("\n}\n");
    let src = dir.path().join("lib.rs");
    if let Err(e) = std::fs::write(&src, &text) {
        return TestOutcome::error(format!("write {}: {e}", src.display()));
    }
    let bin = dir.path().join("tests-bin");
    let mut cmd = rustc_command(toolchain, scaffold, true);
    cmd.args([
        "--test",
        "--crate-name",
        "unit",
        "--error-format=json",
        "--cap-lints",
        "allow",
        "-o",
    ])
    .arg(&bin)
    .arg(&src)
    .current_dir(dir.path());
    let built = match run_with_timeout(cmd, toolchain.timeout) {
        Ok(o) => o,
        Err(e) => return TestOutcome::error(format!("compiler: {e}")),
    };
    if !built.status_ok {
        let errors = parse_diagnostics(&built.stderr, None)
            .into_iter()
            .filter(Diagnostic::is_error)
            .count();
        return TestOutcome::error(format!("tests do not build ({errors} errors)"));
    }
    let mut run = Command::new(&bin);
    run.args(["--test-threads=1", "--color=never"]).current_dir(dir.path());
    let out = match run_with_timeout(run, toolchain.timeout) {
        Ok(o) => o,
        Err(e) => return TestOutcome::error(format!("test binary: {e}")),
    };
    let (passed, failed) = parse_test_output(&out.stdout);
    let harness_error = if out.timed_out {
        Some("test run timed out".to_string())
    } else if !out.status_ok && failed == 0 {
        Some("test binary crashed".to_string())
    } else {
        None
    };
    TestOutcome {
        passed,
        failed,
        total: passed + failed,
        harness_error,
    }
}
