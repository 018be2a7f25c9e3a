//! Benchmark metrics: compilation success rate, computational accuracy,
//! unsafe-line ratio, deletion-based coverage probes and unit-weighted
//! aggregation across benchmarks.
//!
//! Values are kept at full precision in memory. Percentages are rounded to
//! one decimal (half away from zero) only when a report is serialized.

mod coverage;
mod unsafe_lines;

pub use coverage::{body_range, identify_test_coverage, repo_hash, CoverageProbe};
pub use unsafe_lines::{count_unsafe_lines, unsafe_ratio, UnsafeStats};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::refiner::{run_unit_tests, TestOutcome, Toolchain, TranslationRecord, UnitStatus};
use crate::scoring::codebleu;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Rounds to one decimal, halves away from zero.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn ser_pct<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round1(*v))
}

fn ser_score<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_some(&((x * 10_000.0).round() / 10_000.0)),
        None => s.serialize_none(),
    }
}

fn percent(hits: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::Contract("no units to score".into()));
    }
    if hits > total {
        return Err(Error::Contract(format!("{hits} hits out of {total}")));
    }
    Ok(100.0 * hits as f64 / total as f64)
}

pub fn csr_from_statuses(statuses: &[UnitStatus]) -> Result<f64> {
    percent(statuses.iter().filter(|s| s.compiles()).count(), statuses.len())
}

/// Share of records that compile.
pub fn compute_csr(records: &[TranslationRecord]) -> Result<f64> {
    csr_from_statuses(&records.iter().map(|r| r.status).collect::<Vec<_>>())
}

/// Share of units passing all their tests. `None` marks a unit without tests,
/// which counts as not passing.
pub fn ca_from_outcomes(outcomes: &[Option<TestOutcome>]) -> Result<f64> {
    let passing = outcomes
        .iter()
        .filter(|o| o.as_ref().is_some_and(TestOutcome::all_passed))
        .count();
    percent(passing, outcomes.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaResult {
    pub ca: f64,
    /// Per record, in input order; `None` when the unit has no tests.
    pub outcomes: Vec<Option<TestOutcome>>,
    pub warnings: Vec<String>,
}

/// Runs each compiled record's reference tests (keyed by unit id) in its
/// stored scaffold. Units that did not compile are not run and fail.
pub fn compute_ca(
    records: &[TranslationRecord],
    tests: &BTreeMap<String, String>,
    toolchain: &Toolchain,
) -> Result<CaResult> {
    let outcomes: Vec<Option<TestOutcome>> = records
        .par_iter()
        .map(|r| {
            let t = tests.get(&r.unit_id)?;
            if !r.status.compiles() {
                return Some(TestOutcome {
                    harness_error: Some("translation does not compile".into()),
                    ..Default::default()
                });
            }
            Some(run_unit_tests(&r.final_code, t, &r.unit_id, &r.scaffold, toolchain))
        })
        .collect();
    let mut warnings = Vec::new();
    if outcomes.iter().all(Option::is_none) {
        warnings.push("no unit has reference tests; CA is 0".to_string());
    }
    for (r, o) in records.iter().zip(&outcomes) {
        if let Some(TestOutcome {
            harness_error: Some(e), ..
        }) = o
        {
            warnings.push(format!("{}: {e}", r.unit_id));
        }
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }
    Ok(CaResult {
        ca: ca_from_outcomes(&outcomes)?,
        outcomes,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitMetrics {
    pub unit_id: String,
    pub status: UnitStatus,
    pub n_err: usize,
    #[serde(serialize_with = "ser_score")]
    pub codebleu: Option<f64>,
    /// `None` when the unit has no reference tests.
    pub tests_passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub name: String,
    pub n_units: usize,
    #[serde(serialize_with = "ser_pct")]
    pub csr: f64,
    #[serde(serialize_with = "ser_pct")]
    pub ca: f64,
    #[serde(serialize_with = "ser_score")]
    pub mean_codebleu: Option<f64>,
    #[serde(serialize_with = "ser_pct")]
    pub unsafe_ratio: f64,
    pub per_unit: Vec<UnitMetrics>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl BenchmarkReport {
    /// A report carrying only headline numbers, as read off a results table.
    pub fn headline(name: &str, n_units: usize, csr: f64, ca: f64) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            name: name.to_string(),
            n_units,
            csr,
            ca,
            mean_codebleu: None,
            unsafe_ratio: 0.0,
            per_unit: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported report schema {}", r.schema_version)));
        }
        Ok(r)
    }

    /// CSR recomputed from the per-unit rows.
    pub fn csr_from_units(&self) -> Option<f64> {
        let statuses: Vec<_> = self.per_unit.iter().map(|u| u.status).collect();
        csr_from_statuses(&statuses).ok()
    }

    pub fn ca_from_units(&self) -> Option<f64> {
        let pass = self.per_unit.iter().filter(|u| u.tests_passed == Some(true)).count();
        percent(pass, self.per_unit.len()).ok()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.csr) || self.ca < 0.0 || self.ca > self.csr + 1e-9 {
            return Err(Error::Contract(format!(
                "{}: expected 0 <= ca ({}) <= csr ({}) <= 100",
                self.name, self.ca, self.csr
            )));
        }
        if !self.per_unit.is_empty() && self.per_unit.len() != self.n_units {
            return Err(Error::Contract(format!(
                "{}: {} units but {} rows",
                self.name,
                self.n_units,
                self.per_unit.len()
            )));
        }
        Ok(())
    }
}

/// Builds a benchmark report. References (unit id → Rust code) feed
/// CodeBLEU against each record's final code.
pub fn evaluate_records(
    name: &str,
    records: &[TranslationRecord],
    tests: &BTreeMap<String, String>,
    references: &BTreeMap<String, String>,
    toolchain: &Toolchain,
) -> Result<BenchmarkReport> {
    let csr = compute_csr(records)?;
    let ca = compute_ca(records, tests, toolchain)?;
    let per_unit: Vec<UnitMetrics> = records
        .iter()
        .zip(&ca.outcomes)
        .map(|(r, o)| UnitMetrics {
            unit_id: r.unit_id.clone(),
            status: r.status,
            n_err: r.final_attempt().report.n_err,
            codebleu: references
                .get(&r.unit_id)
                .map(|reference| codebleu(&r.final_code, reference).total),
            tests_passed: o.as_ref().map(TestOutcome::all_passed),
        })
        .collect();
    let scored: Vec<f64> = per_unit.iter().filter_map(|u| u.codebleu).collect();
    let mean_codebleu = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    let stats = unsafe_ratio(
        records
            .iter()
            .filter(|r| !r.final_code.is_empty())
            .map(|r| (r.unit_id.as_str(), r.final_code.as_str())),
    );
    let mut warnings = ca.warnings;
    warnings.extend(
        stats
            .excluded
            .iter()
            .map(|f| format!("{f}: excluded from unsafe ratio (unparseable)")),
    );
    let report = BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name: name.to_string(),
        n_units: records.len(),
        csr,
        ca: ca.ca,
        mean_codebleu,
        unsafe_ratio: stats.ratio(),
        per_unit,
        warnings,
    };
    report.check_invariants()?;
    Ok(report)
}

fn weighted(reports: &[BenchmarkReport], f: impl Fn(&BenchmarkReport) -> f64) -> f64 {
    let n: usize = reports.iter().map(|r| r.n_units).sum();
    if n == 0 {
        return 0.0;
    }
    reports.iter().map(|r| f(r) * r.n_units as f64).sum::<f64>() / n as f64
}

/// Unit-weighted combination of benchmark reports.
pub fn aggregate(name: &str, reports: &[BenchmarkReport]) -> Result<BenchmarkReport> {
    match reports {
        [] => Err(Error::Contract("nothing to aggregate".into())),
        [one] => Ok(BenchmarkReport {
            name: name.to_string(),
            ..one.clone()
        }),
        _ => {
            let with_bleu: Vec<BenchmarkReport> =
                reports.iter().filter(|r| r.mean_codebleu.is_some()).cloned().collect();
            let mean_codebleu =
                (!with_bleu.is_empty()).then(|| weighted(&with_bleu, |r| r.mean_codebleu.unwrap_or(0.0)));
            Ok(BenchmarkReport {
                schema_version: REPORT_SCHEMA_VERSION,
                name: name.to_string(),
                n_units: reports.iter().map(|r| r.n_units).sum(),
                csr: weighted(reports, |r| r.csr),
                ca: weighted(reports, |r| r.ca),
                mean_codebleu,
                unsafe_ratio: weighted(reports, |r| r.unsafe_ratio),
                per_unit: reports.iter().flat_map(|r| r.per_unit.iter().cloned()).collect(),
                warnings: reports.iter().flat_map(|r| r.warnings.iter().cloned()).collect(),
            })
        }
    }
}

/// Plain-text table with one row per report.
pub fn render_summary(reports: &[BenchmarkReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0).max(9);
    let mut out = format!(
        "{:<width$}  {:>7}  {:>6}  {:>6}  {:>8}  {:>7}\n",
        "benchmark", "units", "CSR%", "CA%", "CodeBLEU", "unsafe%"
    );
    for r in reports {
        let bleu = r.mean_codebleu.map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>6.1}  {:>6.1}  {:>8}  {:>7.1}",
            r.name,
            r.n_units,
            round1(r.csr),
            round1(r.ca),
            bleu,
            round1(r.unsafe_ratio)
        );
    }
    out
}
