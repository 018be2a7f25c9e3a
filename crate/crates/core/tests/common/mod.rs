#![allow(dead_code)]

use std::path::{Path, PathBuf};

use crosswalk_core::align::AlignedContext;
use crosswalk_core::analyzer::extract_dependency_set;
use crosswalk_core::config::{BackendKind, RunConfig};
use crosswalk_core::context::{build_context, BridgeDoc, ContextConfig, PromptContext, TranslationStore};
use crosswalk_core::gateway::{Gateway, MockScript, ScriptEntry};
use crosswalk_core::pipeline::analyze;
use crosswalk_core::pool::DependencyPool;
use crosswalk_core::refiner::{
    refine_unit, Budgets, RefineConfig, RefineInput, Scaffold, Toolchain, TranslationRecord,
};
use crosswalk_core::templates::TemplateSet;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn mini_repo() -> PathBuf {
    fixtures().join("mini_repo")
}

pub fn mini_pool() -> PathBuf {
    fixtures().join("mini_pool")
}

pub fn mini_script_path() -> PathBuf {
    fixtures().join("mini_script.toml")
}

pub fn mini_script() -> MockScript {
    MockScript::load(&mini_script_path()).expect("fixture script loads")
}

pub fn mock_gateway() -> Gateway {
    Gateway::mock(mini_script())
}

/// Mock-backed run of the five-function fixture with the given repair budgets.
pub fn mini_config(out: &Path, compile_iters: u32, consistency_iters: u32) -> RunConfig {
    let mut c = RunConfig {
        name: Some("mini".into()),
        c_root: Some(mini_repo()),
        pool_root: Some(mini_pool()),
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    c.backend.kind = BackendKind::Mock;
    c.backend.mock_script = Some(mini_script_path());
    c.budgets.compile_iters = compile_iters;
    c.budgets.consistency_iters = consistency_iters;
    c
}

pub const UNITS: [&str; 5] = [
    "src/buf.c::buf_len",
    "src/buf.c::buf_clear",
    "src/buf.c::buf_push",
    "src/hash.c::hash_byte",
    "src/hash.c::hash_buf",
];

/// Prompt context for the leaf unit `hash_byte`, without pool entries.
pub fn leaf_context() -> PromptContext {
    let a = analyze(&mini_repo()).unwrap();
    let unit = a.repo.unit("src/hash.c::hash_byte").unwrap();
    let deps = extract_dependency_set(&unit.id, &a.repo, &a.graph).unwrap();
    build_context(
        unit,
        &deps,
        &AlignedContext::default(),
        &DependencyPool::default(),
        &a.order,
        &TranslationStore::default(),
        &BridgeDoc {
            text: "FNV-1a step.".into(),
            fallback: false,
        },
        &ContextConfig::default(),
    )
    .unwrap()
}

pub const GOOD: &str =
    "```rust\npub fn hash_byte(h: u32, c: u8) -> u32 {\n    (h ^ c as u32).wrapping_mul(16777619)\n}\n```";
pub const UNDEFINED: &str =
    "```rust\npub fn hash_byte(h: u32, c: u8) -> u32 {\n    (h ^ c as u32).wrapping_mul(FNV_PRIME)\n}\n```";
pub const TWO_ERRORS: &str = "```rust\npub fn hash_byte(h: u32, c: u8) -> u32 {\n    let p: u32 = \"prime\";\n    let q: bool = 3u8;\n    h ^ c as u32\n}\n```";

/// Refines the leaf unit against an in-memory script.
pub fn refine_with(script: Vec<ScriptEntry>, budgets: Budgets) -> (TranslationRecord, Gateway) {
    let ctx = leaf_context();
    let gateway = Gateway::mock(MockScript::new(script));
    let input = RefineInput {
        unit_id: "src/hash.c::hash_byte",
        ctx: &ctx,
        scaffold: &Scaffold::default(),
        drafts: None,
    };
    let config = RefineConfig {
        budgets,
        ..RefineConfig::default()
    };
    let rec = refine_unit(
        &input,
        &gateway,
        &TemplateSet::default(),
        &Toolchain::default(),
        &config,
    )
    .unwrap();
    (rec, gateway)
}

pub mod oracles;
