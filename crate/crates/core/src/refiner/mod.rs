//! Compile-guided refinement of translated units.

mod compile;
mod harness;
mod refine;

pub(crate) use compile::run_with_timeout;
pub use compile::{
    assemble, build_pool_crate, compile_unit, format_diagnostics, parse_diagnostics, stub_code, Assembled,
    CompileReport, Diagnostic, PoolLink, Scaffold, ScaffoldPiece, Severity, Toolchain, MAX_PROMPT_DIAGNOSTICS,
};
pub use harness::{parse_test_output, run_unit_tests, TestOutcome};
pub use refine::{
    best_attempt, parse_verdict, refine_unit, request_drafts, Attempt, BudgetUsed, Budgets, ConsistencyVerdict, Draft,
    RefineConfig, RefineInput, Stage, TranslationRecord, UnitStatus,
};
