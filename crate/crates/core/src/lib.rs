//! Dependency-aware C-to-Rust migration.
//!
//! The crate is organised along the migration pipeline:
//!
//! * [`analyzer`] parses a C repository, builds the global call graph and
//!   derives a bottom-up translation order over its condensation.
//! * [`pool`] indexes an existing Rust codebase into ten item categories with
//!   impl-block linkage.
//! * [`align`] maps C dependencies onto pool entries through embedding
//!   retrieval and adds owning types of matched methods.
//! * [`context`] assembles the granularity-adaptive prompt context.
//! * [`gateway`] is the uniform completion interface (remote HTTP or scripted mock).
//! * [`refiner`] drives translate → compile → repair → consistency audit.
//! * [`scoring`] holds the reward arithmetic and CodeBLEU.
//! * [`metrics`] computes CSR, CA, unsafe-line ratio, coverage probes and aggregation.
//! * [`pipeline`] wires everything into resumable runs.

pub mod align;
pub mod analyzer;
pub mod config;
pub mod context;
pub mod error;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod pool;
pub mod refiner;
pub mod scoring;
pub mod templates;
pub mod tokens;

pub use error::{Error, Result};
