use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use crosswalk_core::config::{BackendKind, Overrides, RunConfig};
use crosswalk_core::metrics::{aggregate, render_summary, BenchmarkReport};
use crosswalk_core::pipeline::{analyze, run_evaluate, run_translate, BenchmarkSpec, RunOptions};
use crosswalk_core::pool::build_pool;
use crosswalk_core::Error;

/// Dependency-aware C-to-Rust migration.
#[derive(Parser)]
#[command(name = "crosswalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the C repository, print its translation levels and write the graph dump.
    Analyze(RunArgs),
    /// Translate the C repository level by level.
    Translate(RunArgs),
    /// Score finished runs against a benchmark spec.
    Evaluate(EvalArgs),
    /// Combine report files into one unit-weighted table.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    c_root: Option<PathBuf>,
    /// Existing Rust crate used as the dependency pool.
    #[arg(long)]
    pool_root: Option<PathBuf>,
    /// Run directory.
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Completion endpoint for the remote backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    compile_iters: Option<u32>,
    #[arg(long)]
    consistency_iters: Option<u32>,
    /// Initial candidates per unit, ranked by hybrid reward.
    #[arg(long)]
    candidates: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Show C dependencies only, without pool retrieval.
    #[arg(long)]
    plain_deps: bool,
    #[arg(long)]
    keep_artifacts: bool,
    /// Continue from the run directory's checkpoint.
    #[arg(long)]
    resume: bool,
    /// Units refined concurrently within a level.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    rustc: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Finished run directories.
    #[arg(long = "run-dir", required = true)]
    run_dirs: Vec<PathBuf>,
    /// Benchmark spec with reference tests and translations.
    #[arg(long)]
    bench: PathBuf,
    /// Where to write the combined report when several runs are given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rustc: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files written by `translate` or `evaluate`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long, default_value = "TOTAL")]
    name: String,
    /// Write the combined report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "mock" => Ok(BackendKind::Mock),
        "remote" => Ok(BackendKind::Remote),
        _ => Err(format!("unknown backend `{s}` (mock or remote)")),
    }
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let overrides = Overrides {
            c_root: self.c_root.clone(),
            pool_root: self.pool_root.clone(),
            output_dir: self.output_dir.clone(),
            backend: self.backend,
            mock_script: self.mock_script.clone(),
            endpoint: self.endpoint.clone(),
            compile_iters: self.compile_iters,
            consistency_iters: self.consistency_iters,
            candidates: self.candidates,
            alpha: self.alpha,
            beta: self.beta,
            plain_deps: self.plain_deps.then_some(true),
            keep_artifacts: self.keep_artifacts.then_some(true),
            jobs: self.jobs,
            rustc: self.rustc.clone(),
        };
        Ok(RunConfig::resolve(self.config.as_deref(), &overrides)?)
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_analyze(args: &RunArgs) -> anyhow::Result<i32> {
    let config = args.resolve()?;
    let root = config.c_root()?;
    let a = analyze(root)?;
    let dump = crosswalk_core::analyzer::render_graph_dump(&a.graph, &a.order);
    println!("{} units, {} levels", a.order.len(), a.order.levels.len());
    for (i, level) in a.order.levels.iter().enumerate() {
        println!("level {i}: {}", level.join(", "));
    }
    for skipped in &a.repo.skipped {
        eprintln!("skipped {}: {}", skipped.path, skipped.reason);
    }
    if args.output_dir.is_some() || args.config.is_some() {
        write(&config.output_dir.join("graph.txt"), &dump)?;
        if let Some(pool_root) = &config.pool_root {
            let pool = build_pool(pool_root)?;
            println!("pool: {} entries", pool.len());
            write(&config.output_dir.join("pool.txt"), &pool.render_dump())?;
        }
    }
    Ok(0)
}

fn cmd_translate(args: &RunArgs) -> anyhow::Result<i32> {
    let config = args.resolve()?;
    let options = RunOptions {
        resume: args.resume,
        stop_after_level: None,
    };
    let outcome = run_translate(&config, &options)?;
    let compiled = outcome.records.iter().filter(|r| r.status.compiles()).count();
    println!("{compiled}/{} units compiled", outcome.records.len());
    if let Some(report) = &outcome.report {
        print!("{}", render_summary(std::slice::from_ref(report)));
    }
    println!("run directory: {}", outcome.run_dir.display());
    Ok(outcome.exit_code())
}

fn cmd_evaluate(args: &EvalArgs) -> anyhow::Result<i32> {
    let spec = BenchmarkSpec::load(&args.bench)?;
    let mut toolchain = RunConfig::default().toolchain();
    if let Some(rustc) = &args.rustc {
        toolchain.rustc = rustc.clone();
    }
    toolchain.preflight()?;
    let mut reports = Vec::new();
    for dir in &args.run_dirs {
        reports.push(run_evaluate(dir, &spec, &toolchain)?);
    }
    if reports.len() > 1 {
        let total = aggregate("TOTAL", &reports)?;
        if let Some(out) = &args.out {
            write(out, &total.to_json()?)?;
        }
        reports.push(total);
    } else if let Some(out) = &args.out {
        write(out, &reports[0].to_json()?)?;
    }
    print!("{}", render_summary(&reports));
    Ok(0)
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<i32> {
    let mut reports = Vec::new();
    for path in &args.reports {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report = BenchmarkReport::from_json(&text)?;
        report.check_invariants()?;
        reports.push(report);
    }
    if reports.is_empty() {
        bail!("no reports given");
    }
    let total = aggregate(&args.name, &reports)?;
    if let Some(out) = &args.out {
        write(out, &total.to_json()?)?;
    }
    if reports.len() > 1 {
        reports.push(total);
    }
    print!("{}", render_summary(&reports));
    Ok(0)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Translate(a) => cmd_translate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let kind = match e.downcast_ref::<Error>() {
                Some(Error::Toolchain(_)) => "toolchain",
                Some(Error::Config(_)) => "configuration",
                Some(Error::IncompleteRun(_)) => "incomplete run",
                _ => "fatal",
            };
            eprintln!("crosswalk: {kind} error: {e:#}");
            ExitCode::from(2)
        }
    }
}
