mod common;

use std::collections::BTreeMap;
use std::path::Path;

use crosswalk_core::config::RunConfig;
use crosswalk_core::metrics::aggregate;
use crosswalk_core::pipeline::{load_run, run_evaluate, run_translate_with, BenchmarkSpec, RunOptions};
use crosswalk_core::refiner::{compile_unit, UnitStatus};
use crosswalk_core::Error;

use common::{fixtures, mini_config, mock_gateway, UNITS};

fn run(config: &RunConfig) -> (crosswalk_core::pipeline::RunOutcome, usize) {
    let gw = mock_gateway();
    let outcome = run_translate_with(config, &RunOptions::default(), &gw).unwrap();
    let requests = gw.requests();
    assert!(requests.iter().all(|r| !r.network), "mock run touched the network");
    (outcome, requests.len())
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn statuses(outcome: &crosswalk_core::pipeline::RunOutcome) -> BTreeMap<&str, UnitStatus> {
    outcome.records.iter().map(|r| (r.unit_id.as_str(), r.status)).collect()
}

fn bench() -> BenchmarkSpec {
    BenchmarkSpec::load(&fixtures().join("bench").join("mini_bench.toml")).unwrap()
}

#[test]
fn full_budgets_translate_everything() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, calls) = run(&mini_config(dir.path(), 3, 2));
    // 5 bridge docstrings, 5 drafts, 3 compile repairs, 5 audits, then one
    // audit repair and re-audit for hash_byte.
    assert_eq!(calls, 20);
    assert_eq!(outcome.exit_code(), 0);
    assert!(outcome.records.iter().all(|r| r.status == UnitStatus::Functional));
    let report = outcome.report.as_ref().unwrap();
    assert_eq!(report.csr, 100.0);

    let per_unit: BTreeMap<&str, u32> = outcome
        .records
        .iter()
        .map(|r| (r.unit_id.as_str(), r.gateway_calls))
        .collect();
    let expected: BTreeMap<&str, u32> = [
        ("src/buf.c::buf_len", 2),
        ("src/buf.c::buf_clear", 3),
        ("src/hash.c::hash_byte", 4),
        ("src/buf.c::buf_push", 3),
        ("src/hash.c::hash_buf", 3),
    ]
    .into_iter()
    .collect();
    assert_eq!(per_unit, expected);

    for file in [
        "config.toml",
        "graph.txt",
        "pool.txt",
        "checkpoint.json",
        "report.json",
        "summary.txt",
        "trace.log",
    ] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }
    let buf_rs = read(&dir.path().join("rust/src/buf.rs"));
    assert!(buf_rs.contains("pub fn buf_push(b: &mut Buf, c: u8) -> i32"));
    assert_eq!(load_run(dir.path()).unwrap().len(), 5);
}

#[test]
fn recorded_attempts_recompile_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, _) = run(&mini_config(dir.path(), 3, 2));
    let toolchain = mini_config(dir.path(), 3, 2).toolchain();
    for r in &outcome.records {
        for a in &r.attempts {
            let again = compile_unit(&a.code, &r.unit_id, &r.scaffold, &toolchain, false).unwrap();
            assert_eq!(again.n_err, a.report.n_err, "{}", r.unit_id);
        }
    }
}

#[test]
fn zero_budgets_leave_the_first_drafts() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, calls) = run(&mini_config(dir.path(), 0, 0));
    assert_eq!(calls, 10);
    assert_eq!(outcome.exit_code(), 1);
    assert_eq!(outcome.report.as_ref().unwrap().csr, 40.0);
    let s = statuses(&outcome);
    assert_eq!(s["src/buf.c::buf_len"], UnitStatus::Compiled);
    assert_eq!(s["src/hash.c::hash_byte"], UnitStatus::Compiled);
    assert_eq!(s["src/buf.c::buf_clear"], UnitStatus::Failed);
    assert!(outcome
        .records
        .iter()
        .all(|r| r.attempts.len() == 1 && r.gateway_calls == 1));
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let whole = tempfile::tempdir().unwrap();
    run(&mini_config(whole.path(), 3, 2));

    let split = tempfile::tempdir().unwrap();
    let config = mini_config(split.path(), 3, 2);
    let gw = mock_gateway();
    let first = run_translate_with(
        &config,
        &RunOptions {
            resume: false,
            stop_after_level: Some(0),
        },
        &gw,
    )
    .unwrap();
    assert_eq!((first.levels_completed, first.levels_total), (1, 2));
    assert!(first.report.is_none());
    assert!(matches!(load_run(split.path()), Err(Error::IncompleteRun(_))));

    let gw = mock_gateway();
    let second = run_translate_with(
        &config,
        &RunOptions {
            resume: true,
            stop_after_level: None,
        },
        &gw,
    )
    .unwrap();
    assert_eq!(second.levels_completed, 2);
    // Only level 1 is redone: 2 bridges, 2 drafts, 2 repairs, 2 audits.
    assert_eq!(gw.request_count(), 8);
    assert_eq!(
        read(&whole.path().join("report.json")),
        read(&split.path().join("report.json"))
    );
    assert_eq!(
        read(&whole.path().join("trace.log")),
        read(&split.path().join("trace.log"))
    );
}

#[test]
fn resume_refuses_a_changed_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let gw = mock_gateway();
    let opts = RunOptions {
        resume: false,
        stop_after_level: Some(0),
    };
    run_translate_with(&mini_config(dir.path(), 3, 2), &opts, &gw).unwrap();
    let resume = RunOptions {
        resume: true,
        stop_after_level: None,
    };
    let err = run_translate_with(&mini_config(dir.path(), 1, 2), &resume, &mock_gateway()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn runs_are_deterministic_and_independent_of_jobs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    run(&mini_config(a.path(), 3, 2));
    run(&mini_config(b.path(), 3, 2));
    let mut parallel = mini_config(c.path(), 3, 2);
    parallel.jobs = 4;
    run(&parallel);
    for file in ["report.json", "trace.log", "graph.txt", "pool.txt"] {
        assert_eq!(read(&a.path().join(file)), read(&b.path().join(file)), "{file}");
        assert_eq!(read(&a.path().join(file)), read(&c.path().join(file)), "{file}");
    }
    // Records also log compile wall time and the run's own pool-build path.
    for id in UNITS {
        let name = crosswalk_core::pipeline::record_file_name(id);
        let ra = normalized_record(&a.path().join("records").join(&name), a.path());
        let rb = normalized_record(&b.path().join("records").join(&name), b.path());
        assert_eq!(ra, rb, "{id}");
    }
}

fn normalized_record(path: &Path, run_dir: &Path) -> serde_json::Value {
    fn walk(v: &mut serde_json::Value, prefix: &str) {
        match v {
            serde_json::Value::Object(m) => {
                m.remove("elapsed_ms");
                m.values_mut().for_each(|x| walk(x, prefix));
            }
            serde_json::Value::Array(xs) => xs.iter_mut().for_each(|x| walk(x, prefix)),
            serde_json::Value::String(s) => *s = s.replace(prefix, "<run>"),
            _ => {}
        }
    }
    let mut v: serde_json::Value = serde_json::from_str(&read(path)).unwrap();
    walk(&mut v, &run_dir.display().to_string());
    v
}

fn traces(outcome: &crosswalk_core::pipeline::RunOutcome) -> Vec<String> {
    outcome.records.iter().flat_map(|r| r.trace.iter().cloned()).collect()
}

fn count(traces: &[String], event: &str) -> usize {
    traces.iter().filter(|t| t.as_str() == event).count()
}

#[test]
fn ablations_skip_their_stages() {
    let dir = tempfile::tempdir().unwrap();

    let mut plain = mini_config(&dir.path().join("plain"), 3, 2);
    plain.thresholds.plain_deps = true;
    let (o, _) = run(&plain);
    let t = traces(&o);
    assert_eq!(count(&t, "align: skipped (plain deps)"), 5);
    assert!(!t.iter().any(|e| e.starts_with("align: ") && e.ends_with("matches")));

    let (o, _) = run(&mini_config(&dir.path().join("no-compile"), 0, 2));
    let t = traces(&o);
    assert_eq!(count(&t, "compile-repair"), 0);
    assert_eq!(count(&t, "compile-repair: skipped (budget 0)"), 5);
    assert!(count(&t, "consistency-check") > 0);

    let (o, _) = run(&mini_config(&dir.path().join("no-consistency"), 3, 0));
    let t = traces(&o);
    assert_eq!(count(&t, "compile-repair"), 3);
    assert_eq!(count(&t, "consistency-check"), 0);
    assert_eq!(count(&t, "consistency: skipped (budget 0)"), 5);
    assert_eq!(o.report.as_ref().unwrap().csr, 100.0);
    assert!(o.records.iter().all(|r| r.status == UnitStatus::Compiled));

    let (o, _) = run(&mini_config(&dir.path().join("no-repair"), 0, 0));
    let t = traces(&o);
    assert_eq!(
        count(&t, "compile-repair") + count(&t, "consistency-check") + count(&t, "consistency-repair"),
        0
    );
    assert_eq!(count(&t, "translate"), 5);
}

#[test]
fn missing_toolchain_stops_before_any_request() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = mini_config(dir.path(), 3, 2);
    config.toolchain.rustc = "/nonexistent/rustc".into();
    let gw = mock_gateway();
    let err = run_translate_with(&config, &RunOptions::default(), &gw).unwrap_err();
    assert!(matches!(err, Error::Toolchain(_)), "{err}");
    assert_eq!(gw.request_count(), 0);
}

#[test]
fn evaluation_matches_the_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    let bare = dir.path().join("bare");
    run(&mini_config(&full, 3, 2));
    run(&mini_config(&bare, 0, 0));
    let toolchain = mini_config(&full, 3, 2).toolchain();
    let spec = bench();

    let a = run_evaluate(&full, &spec, &toolchain).unwrap();
    assert_eq!((a.csr, a.ca), (100.0, 100.0));
    let buf_len = a.per_unit.iter().find(|u| u.unit_id == "src/buf.c::buf_len").unwrap();
    assert_eq!(buf_len.codebleu, Some(1.0));
    assert!(full.join("evaluation.json").is_file() && full.join("evaluation.txt").is_file());

    // Without repairs only buf_len and hash_byte compile, and hash_byte still adds.
    let b = run_evaluate(&bare, &spec, &toolchain).unwrap();
    assert_eq!((b.csr, b.ca), (40.0, 20.0));
    let passed: Vec<&str> = b
        .per_unit
        .iter()
        .filter(|u| u.tests_passed == Some(true))
        .map(|u| u.unit_id.as_str())
        .collect();
    assert_eq!(passed, ["src/buf.c::buf_len"]);

    let total = aggregate("TOTAL", &[a, b]).unwrap();
    assert_eq!((total.n_units, total.csr, total.ca), (10, 70.0, 60.0));
    assert!((total.csr_from_units().unwrap() - total.csr).abs() < 0.05);
    assert!((total.ca_from_units().unwrap() - total.ca).abs() < 0.05);
}

#[test]
fn evaluation_rejects_empty_specs_and_partial_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = mini_config(dir.path(), 3, 2);
    let toolchain = config.toolchain();
    let empty = BenchmarkSpec::from_toml("name = \"empty\"\n").unwrap();
    assert!(matches!(
        run_evaluate(dir.path(), &empty, &toolchain),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        run_evaluate(dir.path(), &bench(), &toolchain),
        Err(Error::IncompleteRun(_))
    ));
}
