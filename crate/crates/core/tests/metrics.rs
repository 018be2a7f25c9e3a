mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use crosswalk_core::metrics::{
    aggregate, compute_ca, count_unsafe_lines, csr_from_statuses, identify_test_coverage, repo_hash, round1,
    unsafe_ratio, BenchmarkReport, CoverageProbe,
};
use crosswalk_core::pipeline::{run_translate_with, RunOptions};
use crosswalk_core::refiner::{Scaffold, Toolchain, TranslationRecord, UnitStatus};
use crosswalk_core::Error;
use proptest::prelude::*;
use walkdir::WalkDir;

use common::{fixtures, mini_config, mock_gateway};

fn statuses(compiled: usize, total: usize) -> Vec<UnitStatus> {
    (0..total)
        .map(|i| {
            if i < compiled {
                UnitStatus::Compiled
            } else {
                UnitStatus::Failed
            }
        })
        .collect()
}

#[test]
fn table_rates_from_counts() {
    assert_eq!(round1(csr_from_statuses(&statuses(64, 125)).unwrap()), 51.2);
    assert_eq!(round1(csr_from_statuses(&statuses(14, 20)).unwrap()), 70.0);
    assert!(csr_from_statuses(&[]).is_err());
}

#[test]
fn aggregation_reproduces_the_total_row() {
    let a = BenchmarkReport::headline("large", 125, 51.2, 36.8);
    let b = BenchmarkReport::headline("small", 20, 95.0, 70.0);
    let total = aggregate("TOTAL", &[a.clone(), b]).unwrap();
    assert_eq!(total.n_units, 145);
    assert!((total.csr - 57.2).abs() < 0.05, "{}", total.csr);
    assert!((total.ca - 41.4).abs() < 0.05, "{}", total.ca);
    let json: serde_json::Value = serde_json::from_str(&total.to_json().unwrap()).unwrap();
    assert_eq!(json["csr"], 57.2);
    assert_eq!(json["ca"], 41.4);

    let single = aggregate("large", std::slice::from_ref(&a)).unwrap();
    assert_eq!(single, a);
    assert!(aggregate("none", &[]).is_err());
}

#[test]
fn reports_with_ca_above_csr_are_rejected() {
    let bad = BenchmarkReport::headline("bad", 10, 40.0, 50.0);
    assert!(matches!(bad.check_invariants(), Err(Error::Contract(_))));
    assert!(BenchmarkReport::from_json(&bad.to_json().unwrap()).is_ok());
}

fn record(id: &str, code: &str, status: UnitStatus) -> TranslationRecord {
    let mut r = TranslationRecord::unattempted(id, "fixture", "hand-made record", Scaffold::default());
    r.final_code = code.to_string();
    r.attempts[0].code = code.to_string();
    r.status = status;
    r
}

/// double passes, triple has a wrong body, halve never compiled.
#[test]
fn three_unit_suite_matches_the_hand_count() {
    let records = vec![
        record(
            "m.c::double",
            "pub fn double(x: i32) -> i32 { x * 2 }",
            UnitStatus::Compiled,
        ),
        record(
            "m.c::triple",
            "pub fn triple(x: i32) -> i32 { x * 2 }",
            UnitStatus::Compiled,
        ),
        record("m.c::halve", "pub fn halve(x: i32) -> i32 { x / }", UnitStatus::Failed),
    ];
    let tests: BTreeMap<String, String> = [
        ("m.c::double", "#[test]\nfn d() { assert_eq!(double(4), 8); }"),
        (
            "m.c::triple",
            "#[test]\nfn t() { assert_eq!(triple(3), 9); }\n#[test]\nfn z() { assert_eq!(triple(0), 0); }",
        ),
        ("m.c::halve", "#[test]\nfn h() { assert_eq!(halve(4), 2); }"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    let ca = compute_ca(&records, &tests, &Toolchain::default()).unwrap();
    let passed: Vec<Option<(usize, usize)>> = ca
        .outcomes
        .iter()
        .map(|o| o.as_ref().map(|o| (o.passed, o.failed)))
        .collect();
    assert_eq!(passed, vec![Some((1, 0)), Some((1, 1)), Some((0, 0))]);
    assert_eq!(round1(ca.ca), 33.3);
    let csr = csr_from_statuses(&records.iter().map(|r| r.status).collect::<Vec<_>>()).unwrap();
    assert_eq!(round1(csr), 66.7);
    assert!(ca.ca <= csr);

    // A unit with no tests counts against CA.
    let none = compute_ca(&records[..1], &BTreeMap::new(), &Toolchain::default()).unwrap();
    assert_eq!(none.ca, 0.0);
    assert_eq!(none.warnings.len(), 1);
}

#[test]
fn unsafe_sample_matches_the_hand_count() {
    let text = std::fs::read_to_string(fixtures().join("unsafe_sample.rs")).unwrap();
    // Ten code lines; the `unsafe fn` signature and the one-line block are unsafe.
    assert_eq!(count_unsafe_lines(&text), Some((2, 10)));
    let stats = unsafe_ratio([("unsafe_sample.rs", text.as_str())]);
    assert_eq!(stats.ratio(), 20.0);
    assert_eq!(unsafe_ratio([("empty.rs", "pub fn f() {}\n")]).ratio(), 0.0);
}

fn rust_files(root: &Path) -> Vec<(String, String)> {
    WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "rs"))
        .map(|e| {
            (
                e.path().display().to_string(),
                std::fs::read_to_string(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn translated_fixture_stays_under_the_unsafe_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let gw = mock_gateway();
    let outcome = run_translate_with(&mini_config(dir.path(), 3, 2), &RunOptions::default(), &gw).unwrap();
    let mut files = rust_files(&dir.path().join("rust"));
    files.extend(rust_files(&common::mini_pool()));
    assert!(files.len() >= 3);
    let stats = unsafe_ratio(files.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    assert!(stats.excluded.is_empty());
    assert!(stats.ratio() < 3.39, "{}", stats.ratio());
    assert!(outcome.report.unwrap().unsafe_ratio < 3.39);
}

proptest! {
    #[test]
    fn comments_and_blanks_do_not_move_the_ratio(
        inserts in proptest::collection::vec((0usize..16, prop::sample::select(vec!["", "   ", "// note", "    /* block */"])), 0..8),
    ) {
        let text = std::fs::read_to_string(fixtures().join("unsafe_sample.rs")).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        for (at, extra) in inserts {
            let at = at.min(lines.len());
            lines.insert(at, extra.to_string());
        }
        let edited = lines.join("\n") + "\n";
        prop_assert_eq!(count_unsafe_lines(&edited), Some((2, 10)));
    }
}

fn copy_dir(from: &Path, to: &Path) {
    for entry in WalkDir::new(from).into_iter().filter_map(|e| e.ok()) {
        let rel = entry.path().strip_prefix(from).unwrap();
        let target = to.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&target).unwrap();
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}

#[test]
fn coverage_probe_classifies_the_fixture_crate() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join("coverage_crate"), dir.path());
    let before = repo_hash(dir.path()).unwrap();
    let probe = CoverageProbe::new(dir.path(), Duration::from_secs(300)).unwrap();
    assert_eq!(probe.baseline_hash(), before);
    let lib = Path::new("src/lib.rs");
    assert!(probe.probe(lib, "add").unwrap());
    assert!(probe.probe(lib, "scale").unwrap());
    assert!(!probe.probe(lib, "unused_helper").unwrap());
    assert!(matches!(probe.probe(lib, "missing"), Err(Error::Parse { .. })));
    assert_eq!(repo_hash(dir.path()).unwrap(), before);
    assert!(!dir.path().join("Cargo.lock").exists());

    assert!(identify_test_coverage(dir.path(), lib, "add").unwrap());
    assert_eq!(repo_hash(dir.path()).unwrap(), before);
}
