//! End-to-end runs: analyze, translate level by level with checkpoints,
//! and evaluate finished runs.
//!
//! Run directory layout:
//!
//! ```text
//! config.toml        resolved configuration (no secrets)
//! graph.txt          call graph and levels
//! pool.txt           dependency pool dump (when a pool root is given)
//! pool-build/        compiled pool crate linked into every scaffold
//! records/*.json     one translation record per unit
//! checkpoint.json    levels completed so far
//! rust/              final translated sources, one file per C file
//! report.json        benchmark report (schema versioned)
//! summary.txt        human-readable report table
//! trace.log          stage events per unit
//! ```

mod bench;

pub use bench::{BenchUnit, BenchmarkSpec};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{AlignedContext, Aligner, EmbeddingProvider, HashingEmbedder, RemoteEmbedder};
use crate::analyzer::{
    build_call_graph, extract_dependency_set, parse_c_repo, render_graph_dump, topological_order, CallGraph,
    ParseOptions, RepoModel, TranslationOrder,
};
use crate::config::RunConfig;
use crate::context::{build_context, request_bridge_docstring, ContextConfig, TranslationStore};
use crate::error::{Error, Result};
use crate::gateway::{extract_code_block, Gateway};
use crate::metrics::{evaluate_records, render_summary, BenchmarkReport};
use crate::pool::{build_pool, DependencyPool};
use crate::refiner::{
    build_pool_crate, refine_unit, request_drafts, stub_code, PoolLink, RefineConfig, RefineInput, Scaffold,
    ScaffoldPiece, Toolchain, TranslationRecord,
};
use crate::templates::TemplateSet;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
const CHECKPOINT_FILE: &str = "checkpoint.json";
const RECORDS_DIR: &str = "records";

pub struct Analysis {
    pub repo: RepoModel,
    pub graph: CallGraph,
    pub order: TranslationOrder,
}

pub fn analyze(c_root: &Path) -> Result<Analysis> {
    let repo = parse_c_repo(c_root, &ParseOptions::default())?;
    let graph = build_call_graph(&repo);
    let order = topological_order(&graph);
    Ok(Analysis { repo, graph, order })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    /// Hash of configuration, inputs and analysis; resume refuses a mismatch.
    pub fingerprint: String,
    pub completed_levels: usize,
    pub total_levels: usize,
    /// Units finished so far, in translation order.
    pub units: Vec<String>,
}

impl Checkpoint {
    pub fn load(run_dir: &Path) -> Result<Option<Self>> {
        let path = run_dir.join(CHECKPOINT_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let cp: Self = serde_json::from_str(&text)?;
        if cp.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint schema {}",
                cp.schema_version
            )));
        }
        Ok(Some(cp))
    }

    pub fn is_complete(&self) -> bool {
        self.completed_levels >= self.total_levels
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue from the run directory's checkpoint.
    pub resume: bool,
    /// Stop after finishing this level, leaving a partial run.
    pub stop_after_level: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub records: Vec<TranslationRecord>,
    /// Written only when every level finished.
    pub report: Option<BenchmarkReport>,
    pub levels_completed: usize,
    pub levels_total: usize,
}

impl RunOutcome {
    pub fn all_compiled(&self) -> bool {
        self.report.is_some() && self.records.iter().all(|r| r.status.compiles())
    }

    /// 0 when every unit compiled, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_compiled() {
            0
        } else {
            1
        }
    }
}

pub fn record_file_name(unit_id: &str) -> String {
    let stem: String = unit_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    let digest = Sha256::digest(unit_id.as_bytes());
    format!(
        "{stem}-{:02x}{:02x}{:02x}{:02x}.json",
        digest[0], digest[1], digest[2], digest[3]
    )
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

pub fn load_record(run_dir: &Path, unit_id: &str) -> Result<TranslationRecord> {
    let path = run_dir.join(RECORDS_DIR).join(record_file_name(unit_id));
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Shared, read-only state for one level.
struct Env<'a> {
    repo: &'a RepoModel,
    graph: &'a CallGraph,
    order: &'a TranslationOrder,
    pool: &'a DependencyPool,
    aligner: Option<&'a Aligner<'a>>,
    gateway: &'a Gateway,
    templates: &'a TemplateSet,
    toolchain: &'a Toolchain,
    refine: RefineConfig,
    context: ContextConfig,
}

/// Pool link plus every finished translation, lower levels first. Units that
/// failed contribute stubs.
fn base_scaffold(pool: Option<&PoolLink>, order: &TranslationOrder, store: &TranslationStore) -> Scaffold {
    let mut pieces = Vec::new();
    for id in order.levels.iter().flatten() {
        let Some(t) = store.get(id) else { continue };
        if t.code.trim().is_empty() {
            continue;
        }
        if t.verified {
            pieces.push(ScaffoldPiece {
                unit_id: id.clone(),
                code: t.code.clone(),
                stub: false,
            });
        } else if let Some(code) = stub_code(&t.code) {
            pieces.push(ScaffoldPiece {
                unit_id: id.clone(),
                code,
                stub: true,
            });
        }
    }
    Scaffold {
        pool: pool.cloned(),
        pieces,
    }
}

fn translate_batch(
    env: &Env<'_>,
    batch: &[String],
    store: &TranslationStore,
    base: &Scaffold,
) -> Result<Vec<TranslationRecord>> {
    // Per member: prompt context and the trace entries preceding the loop.
    let mut prepared = Vec::new();
    for id in batch {
        let unit = env.repo.unit(id).ok_or_else(|| Error::UnknownUnit(id.clone()))?;
        let deps = extract_dependency_set(id, env.repo, env.graph)?;
        let mut trace = Vec::new();
        let aligned = match env.aligner {
            Some(a) => {
                let aligned = a.align(&deps, env.repo);
                trace.push(if aligned.degraded {
                    format!("align: {} matches (name fallback)", aligned.matches.len())
                } else {
                    format!("align: {} matches", aligned.matches.len())
                });
                aligned
            }
            None => {
                trace.push("align: skipped (plain deps)".to_string());
                AlignedContext::default()
            }
        };
        let bridge = request_bridge_docstring(unit, env.gateway, env.templates);
        trace.push(if bridge.fallback { "bridge: fallback" } else { "bridge" }.to_string());
        let ctx = build_context(unit, &deps, &aligned, env.pool, env.order, store, &bridge, &env.context);
        prepared.push((id, ctx, trace, bridge.fallback, aligned.degraded));
    }

    let cyclic = batch.len() > 1;
    let mut drafts: Vec<Option<Vec<crate::refiner::Draft>>> = vec![None; batch.len()];
    // Current best code per member, used as peer stubs inside a cycle.
    let mut current: Vec<String> = vec![String::new(); batch.len()];
    if cyclic {
        for (i, (id, ctx, ..)) in prepared.iter().enumerate() {
            if let Ok(ctx) = ctx {
                let d = request_drafts(id, ctx, env.gateway, env.templates, &env.refine);
                if let Some(Ok((text, _))) = d.iter().find(|d| d.is_ok()) {
                    current[i] = extract_code_block(text).map(|x| x.code).unwrap_or_default();
                }
                drafts[i] = Some(d);
            }
        }
    }

    let mut records = Vec::new();
    for (i, (id, ctx, trace, bridge_fallback, degraded)) in prepared.into_iter().enumerate() {
        let mut scaffold = base.clone();
        if cyclic {
            for (j, peer) in batch.iter().enumerate() {
                if j == i {
                    continue;
                }
                if let Some(code) = stub_code(&current[j]) {
                    scaffold.pieces.push(ScaffoldPiece {
                        unit_id: peer.clone(),
                        code,
                        stub: true,
                    });
                }
            }
        }
        let mut record = match ctx {
            Ok(ctx) => {
                let input = RefineInput {
                    unit_id: id,
                    ctx: &ctx,
                    scaffold: &scaffold,
                    drafts: drafts[i].take(),
                };
                refine_unit(&input, env.gateway, env.templates, env.toolchain, &env.refine)?
            }
            Err(e @ Error::BudgetExceeded { .. }) => {
                TranslationRecord::unattempted(id, "context-budget", e.to_string(), scaffold)
            }
            Err(e) => return Err(e),
        };
        if !record.final_code.is_empty() {
            current[i] = record.final_code.clone();
        }
        let mut full_trace = trace;
        full_trace.append(&mut record.trace);
        record.trace = full_trace;
        if bridge_fallback {
            record
                .notes
                .push("bridge docstring fell back to signature summary".into());
        }
        if degraded {
            record.notes.push("alignment fell back to name matching".into());
        }
        records.push(record);
    }
    Ok(records)
}

fn fingerprint(config: &RunConfig, analysis_dump: &str, pool_dump: &str) -> Result<String> {
    let mut snapshot = config.clone();
    snapshot.output_dir = PathBuf::new();
    snapshot.jobs = 1;
    let mut hasher = Sha256::new();
    hasher.update(snapshot.to_toml().as_bytes());
    hasher.update(analysis_dump.as_bytes());
    hasher.update(pool_dump.as_bytes());
    if let Some(script) = &config.backend.mock_script {
        let bytes = std::fs::read(script).map_err(|e| Error::io(script, e))?;
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn rust_path(c_file: &str) -> PathBuf {
    let p = Path::new(c_file);
    p.with_extension("rs")
}

fn write_sources(run_dir: &Path, repo: &RepoModel, records: &[TranslationRecord]) -> Result<()> {
    let mut by_file: BTreeMap<&str, Vec<(usize, &TranslationRecord)>> = BTreeMap::new();
    for r in records {
        if let Some(unit) = repo.unit(&r.unit_id) {
            by_file
                .entry(unit.file.as_str())
                .or_default()
                .push((unit.span.start, r));
        }
    }
    for (file, mut units) in by_file {
        units.sort_by_key(|(start, _)| *start);
        let mut text = String::new();
        for (_, r) in units {
            let _ = writeln!(text, "// {} ({:?})", r.unit_id, r.status);
            text.push_str(r.final_code.trim_end());
            text.push_str("\n\n");
        }
        write(&run_dir.join("rust").join(rust_path(file)), &text)?;
    }
    Ok(())
}

/// Translates the configured C repository.
pub fn run_translate(config: &RunConfig, options: &RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    run_translate_with(config, options, &config.gateway()?)
}

/// As [`run_translate`] with a caller-supplied gateway, whose request log
/// stays inspectable afterwards. Validation and the toolchain preflight run
/// before any gateway call.
pub fn run_translate_with(config: &RunConfig, options: &RunOptions, gateway: &Gateway) -> Result<RunOutcome> {
    config.validate()?;
    let toolchain = config.toolchain();
    toolchain.preflight()?;
    let c_root = config.c_root()?;
    let run_dir = config.output_dir.clone();
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;

    let Analysis { repo, graph, order } = analyze(c_root)?;
    let graph_dump = render_graph_dump(&graph, &order);
    write(&run_dir.join("config.toml"), &config.to_toml())?;
    write(&run_dir.join("graph.txt"), &graph_dump)?;

    let (pool, pool_link) = match &config.pool_root {
        Some(root) => {
            let pool = build_pool(root)?;
            write(&run_dir.join("pool.txt"), &pool.render_dump())?;
            let link = build_pool_crate(root, &run_dir.join("pool-build"), &toolchain);
            (pool, link)
        }
        None => (DependencyPool::default(), None),
    };
    let provider: Box<dyn EmbeddingProvider> = match config.remote_embedding() {
        Some(remote) => Box::new(RemoteEmbedder::new(remote)),
        None => Box::new(HashingEmbedder::new(config.embedding.dim)),
    };
    let aligner =
        (!config.thresholds.plain_deps).then(|| Aligner::new(&pool, provider.as_ref(), config.aligner_config()));

    let fp = fingerprint(config, &graph_dump, &pool.render_dump())?;
    let total_levels = order.levels.len();
    let records_dir = run_dir.join(RECORDS_DIR);
    let mut store = TranslationStore::default();
    let mut records: Vec<TranslationRecord> = Vec::new();
    let mut start_level = 0;
    match (options.resume, Checkpoint::load(&run_dir)?) {
        (true, Some(cp)) => {
            if cp.fingerprint != fp {
                return Err(Error::Config(format!(
                    "checkpoint in {} belongs to a different configuration or input",
                    run_dir.display()
                )));
            }
            for id in &cp.units {
                let r = load_record(&run_dir, id)?;
                store.insert(id.clone(), r.final_code.clone(), r.status.compiles());
                records.push(r);
            }
            start_level = cp.completed_levels;
            tracing::info!(levels = start_level, "resuming from checkpoint");
        }
        _ => {
            if records_dir.exists() {
                std::fs::remove_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
            }
            let _ = std::fs::remove_file(run_dir.join(CHECKPOINT_FILE));
        }
    }

    let templates = TemplateSet::default();
    let env = Env {
        repo: &repo,
        graph: &graph,
        order: &order,
        pool: &pool,
        aligner: aligner.as_ref(),
        gateway,
        templates: &templates,
        toolchain: &toolchain,
        refine: config.refine_config(),
        context: config.context_config(),
    };
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut levels_completed = start_level;
    for level in start_level..total_levels {
        let base = base_scaffold(pool_link.as_ref(), &order, &store);
        let batches = order.batches(level, &graph);
        let done: Vec<Vec<TranslationRecord>> = threads.install(|| {
            batches
                .par_iter()
                .map(|b| translate_batch(&env, b, &store, &base))
                .collect::<Result<_>>()
        })?;
        let mut level_records: BTreeMap<String, TranslationRecord> =
            done.into_iter().flatten().map(|r| (r.unit_id.clone(), r)).collect();
        // Barrier: the store only changes between levels.
        for id in &order.levels[level] {
            let r = level_records
                .remove(id)
                .ok_or_else(|| Error::Contract(format!("no record produced for {id}")))?;
            write_json(&records_dir.join(record_file_name(id)), &r)?;
            store.insert(id.clone(), r.final_code.clone(), r.status.compiles());
            records.push(r);
        }
        levels_completed = level + 1;
        write_json(
            &run_dir.join(CHECKPOINT_FILE),
            &Checkpoint {
                schema_version: CHECKPOINT_SCHEMA_VERSION,
                fingerprint: fp.clone(),
                completed_levels: levels_completed,
                total_levels,
                units: records.iter().map(|r| r.unit_id.clone()).collect(),
            },
        )?;
        tracing::info!(level, units = order.levels[level].len(), "level finished");
        if options.stop_after_level == Some(level) && levels_completed < total_levels {
            return Ok(RunOutcome {
                run_dir,
                records,
                report: None,
                levels_completed,
                levels_total: total_levels,
            });
        }
    }

    write_sources(&run_dir, &repo, &records)?;
    let mut trace = String::new();
    for r in &records {
        for event in &r.trace {
            let _ = writeln!(trace, "{}\t{event}", r.unit_id);
        }
    }
    write(&run_dir.join("trace.log"), &trace)?;
    let report = if records.is_empty() {
        None
    } else {
        let report = evaluate_records(
            &config.run_name(),
            &records,
            &BTreeMap::new(),
            &BTreeMap::new(),
            &toolchain,
        )?;
        write(&run_dir.join("report.json"), &report.to_json()?)?;
        write(
            &run_dir.join("summary.txt"),
            &render_summary(std::slice::from_ref(&report)),
        )?;
        Some(report)
    };
    Ok(RunOutcome {
        run_dir,
        records,
        report,
        levels_completed,
        levels_total: total_levels,
    })
}

/// Records of a finished run, in translation order.
pub fn load_run(run_dir: &Path) -> Result<Vec<TranslationRecord>> {
    let cp = Checkpoint::load(run_dir)?
        .ok_or_else(|| Error::IncompleteRun(format!("{} has no checkpoint", run_dir.display())))?;
    if !cp.is_complete() {
        return Err(Error::IncompleteRun(format!(
            "{}: {} of {} levels done",
            run_dir.display(),
            cp.completed_levels,
            cp.total_levels
        )));
    }
    cp.units.iter().map(|id| load_record(run_dir, id)).collect()
}

/// Scores a finished run against a benchmark spec and writes
/// `evaluation.json` and `evaluation.txt` into the run directory.
pub fn run_evaluate(run_dir: &Path, spec: &BenchmarkSpec, toolchain: &Toolchain) -> Result<BenchmarkReport> {
    if spec.units.is_empty() {
        return Err(Error::Config("benchmark spec lists no units".into()));
    }
    let records = load_run(run_dir)?;
    let ids: BTreeSet<&str> = records.iter().map(|r| r.unit_id.as_str()).collect();
    let unknown: Vec<&str> = spec
        .units
        .iter()
        .map(|u| u.id.as_str())
        .filter(|id| !ids.contains(id))
        .collect();
    if !unknown.is_empty() {
        tracing::warn!(?unknown, "benchmark units not present in the run");
    }
    let name = spec.name.clone().unwrap_or_else(|| {
        run_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into())
    });
    let report = evaluate_records(&name, &records, &spec.tests()?, &spec.references()?, toolchain)?;
    write(&run_dir.join("evaluation.json"), &report.to_json()?)?;
    write(
        &run_dir.join("evaluation.txt"),
        &render_summary(std::slice::from_ref(&report)),
    )?;
    Ok(report)
}
