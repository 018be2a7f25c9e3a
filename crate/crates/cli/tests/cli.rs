use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn crosswalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crosswalk"))
        .args(args)
        .env_remove("CROSSWALK_ENDPOINT")
        .env_remove("CROSSWALK_API_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn translate(out: &Path, extra: &[&str]) -> Output {
    let f = fixtures();
    let mut args = vec![
        "translate".to_string(),
        "--c-root".into(),
        f.join("mini_repo").display().to_string(),
        "--pool-root".into(),
        f.join("mini_pool").display().to_string(),
        "--backend".into(),
        "mock".into(),
        "--mock-script".into(),
        f.join("mini_script.toml").display().to_string(),
        "-o".into(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    crosswalk(&refs)
}

#[test]
fn fixture_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = translate(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("5/5 units compiled"));
    assert!(dir.path().join("report.json").is_file());
}

#[test]
fn partial_run_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = translate(dir.path(), &["--compile-iters", "0"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("2/5 units compiled"));
    assert!(dir.path().join("report.json").is_file());
}

#[test]
fn missing_toolchain_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = translate(dir.path(), &["--rustc", "/nonexistent/rustc"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("toolchain error"), "{}", stderr(&o));
    assert!(!dir.path().join("records").exists());
}

#[test]
fn invalid_configuration_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = translate(dir.path(), &["--candidates", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("configuration error"), "{}", stderr(&o));

    let f = fixtures();
    let o = crosswalk(&[
        "translate",
        "--c-root",
        &f.join("mini_repo").display().to_string(),
        "--backend",
        "remote",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("endpoint"), "{}", stderr(&o));
}

#[test]
fn command_line_beats_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "c_root = {:?}\npool_root = {:?}\noutput_dir = \"out\"\n\n[backend]\nkind = \"mock\"\nmock_script = {:?}\n\n[budgets]\ncompile_iters = 0\n",
            f.join("mini_repo").display().to_string(),
            f.join("mini_pool").display().to_string(),
            f.join("mini_script.toml").display().to_string(),
        ),
    )
    .unwrap();
    let path = config.display().to_string();
    let o = crosswalk(&["translate", "--config", &path]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(dir.path().join("out/report.json").is_file());
    let o = crosswalk(&["translate", "--config", &path, "--compile-iters", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn evaluate_scores_runs_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    let bare = dir.path().join("bare");
    assert_eq!(translate(&full, &[]).status.code(), Some(0));
    assert_eq!(
        translate(&bare, &["--compile-iters", "0", "--consistency-iters", "0"])
            .status
            .code(),
        Some(1)
    );

    let bench = fixtures().join("bench/mini_bench.toml").display().to_string();
    let total = dir.path().join("total.json");
    let o = crosswalk(&[
        "evaluate",
        "--run-dir",
        &full.display().to_string(),
        "--run-dir",
        &bare.display().to_string(),
        "--bench",
        &bench,
        "--out",
        &total.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&total).unwrap()).unwrap();
    assert_eq!(report["n_units"], 10);
    assert_eq!(report["csr"], 70.0);
    assert_eq!(report["ca"], 60.0);
    assert!(stdout(&o).contains("TOTAL"));

    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "name = \"empty\"\n").unwrap();
    let o = crosswalk(&[
        "evaluate",
        "--run-dir",
        &full.display().to_string(),
        "--bench",
        &empty.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let nothing = dir.path().join("nothing");
    std::fs::create_dir(&nothing).unwrap();
    let o = crosswalk(&[
        "evaluate",
        "--run-dir",
        &nothing.display().to_string(),
        "--bench",
        &bench,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("incomplete run"), "{}", stderr(&o));
}

#[test]
fn report_combines_headline_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, n: usize, csr: f64, ca: f64| {
        let path = dir.path().join(name);
        let json = serde_json::json!({
            "schema_version": 1,
            "name": name.trim_end_matches(".json"),
            "n_units": n,
            "csr": csr,
            "ca": ca,
            "mean_codebleu": null,
            "unsafe_ratio": 0.0,
            "per_unit": [],
            "warnings": [],
        });
        std::fs::write(&path, json.to_string()).unwrap();
        path.display().to_string()
    };
    let a = write("large.json", 125, 51.2, 36.8);
    let b = write("small.json", 20, 95.0, 70.0);
    let out = dir.path().join("total.json");
    let o = crosswalk(&["report", &a, &b, "--out", &out.display().to_string()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let total: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(total["csr"], 57.2);
    assert_eq!(total["ca"], 41.4);
    assert_eq!(total["n_units"], 145);
    let table = stdout(&o);
    assert!(table.contains("57.2") && table.contains("41.4"), "{table}");

    let broken = write("broken.json", 10, 40.0, 50.0);
    assert_eq!(crosswalk(&["report", &broken]).status.code(), Some(2));
}

#[test]
fn analyze_prints_levels_and_writes_the_graph() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let o = crosswalk(&[
        "analyze",
        "--c-root",
        &f.join("mini_repo").display().to_string(),
        "--pool-root",
        &f.join("mini_pool").display().to_string(),
        "-o",
        &dir.path().display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("5 units, 2 levels"), "{text}");
    assert!(text.contains("level 1: src/buf.c::buf_push, src/hash.c::hash_buf"));
    assert!(dir.path().join("graph.txt").is_file());
    assert!(dir.path().join("pool.txt").is_file());
}
