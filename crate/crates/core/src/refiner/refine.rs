//! The per-unit loop: translate, compile, repair from diagnostics, then audit
//! consistency and repair findings.
//!
//! Gateway calls per unit (bridge request excluded) never exceed
//! `candidates + compile_iters + 2 * consistency_iters`.

use serde::{Deserialize, Serialize};

use super::compile::{compile_unit, format_diagnostics, CompileReport, Diagnostic, Scaffold, Toolchain};
use crate::context::PromptContext;
use crate::error::Result;
use crate::gateway::{extract_code_block, CompletionRequest, ExtractionPath, Gateway, GatewayError, TaskTag};
use crate::scoring::{rank_candidates, CandidateEval, Ranking};
use crate::templates::{render, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub compile_iters: u32,
    pub consistency_iters: u32,
    /// Initial translations sampled and ranked.
    pub candidates: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            compile_iters: 3,
            consistency_iters: 2,
            candidates: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub budgets: Budgets,
    pub alpha: f64,
    pub beta: f64,
    /// Sampling temperature when more than one candidate is requested.
    pub candidate_temperature: f64,
    pub keep_artifacts: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            budgets: Budgets::default(),
            alpha: 1.0,
            beta: 1.0,
            candidate_temperature: 0.8,
            keep_artifacts: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Translate,
    CompileRepair,
    ConsistencyRepair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub consistent: bool,
    pub discrepancies: Vec<String>,
    /// The response matched no known form and was read as consistent.
    pub parse_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub stage: Stage,
    pub code: String,
    pub extraction: Option<ExtractionPath>,
    pub report: CompileReport,
    pub verdict: Option<ConsistencyVerdict>,
    /// Tokens of the request that produced this attempt.
    pub tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitStatus {
    Compiled,
    Functional,
    Failed,
}

impl UnitStatus {
    pub fn compiles(self) -> bool {
        matches!(self, UnitStatus::Compiled | UnitStatus::Functional)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetUsed {
    pub compile_iters: u32,
    pub consistency_iters: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub unit_id: String,
    pub attempts: Vec<Attempt>,
    pub final_index: usize,
    pub final_code: String,
    pub status: UnitStatus,
    pub budget_used: BudgetUsed,
    /// Gateway calls made by the loop, bridge request excluded.
    pub gateway_calls: u32,
    /// Stage events in order, for auditing which stages ran.
    pub trace: Vec<String>,
    pub notes: Vec<String>,
    pub ranking: Option<Ranking>,
    pub scaffold: Scaffold,
}

impl TranslationRecord {
    /// A failed record for a unit the loop never reached.
    pub fn unattempted(unit_id: &str, code: &str, message: impl Into<String>, scaffold: Scaffold) -> Self {
        let message = message.into();
        Self {
            unit_id: unit_id.to_string(),
            attempts: vec![Attempt {
                stage: Stage::Translate,
                code: String::new(),
                extraction: None,
                report: CompileReport::synthetic(Diagnostic::synthetic(code, message.clone())),
                verdict: None,
                tokens: 0,
            }],
            final_index: 0,
            final_code: String::new(),
            status: UnitStatus::Failed,
            budget_used: BudgetUsed::default(),
            gateway_calls: 0,
            trace: vec![format!("{code}: {message}")],
            notes: vec![message],
            ranking: None,
            scaffold,
        }
    }

    pub fn final_attempt(&self) -> &Attempt {
        &self.attempts[self.final_index]
    }

    pub fn tokens(&self) -> u64 {
        self.attempts.iter().map(|a| a.tokens).sum()
    }
}

/// Index of the attempt with the fewest errors, ties to the latest.
pub fn best_attempt(attempts: &[Attempt]) -> usize {
    let mut best = 0;
    for (i, a) in attempts.iter().enumerate() {
        if a.report.n_err <= attempts[best].report.n_err {
            best = i;
        }
    }
    best
}

/// Reads an audit response.
///
/// `MISMATCH: ...` lines are findings. Otherwise a first line starting with
/// `CONSISTENT` is a pass and one starting with `INCONSISTENT` takes the
/// remaining lines as findings. Anything else passes with `parse_warning`.
pub fn parse_verdict(text: &str) -> ConsistencyVerdict {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.trim().trim_start_matches(['-', '*', ' ']))
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
        .collect();
    let mismatches: Vec<String> = lines
        .iter()
        .filter(|l| l.len() >= 9 && l[..9].eq_ignore_ascii_case("mismatch:"))
        .map(|l| {
            let f = l[9..].trim();
            if f.is_empty() {
                "unspecified".to_string()
            } else {
                f.to_string()
            }
        })
        .collect();
    if !mismatches.is_empty() {
        return ConsistencyVerdict {
            consistent: false,
            discrepancies: mismatches,
            parse_warning: false,
        };
    }
    let first = lines.first().map(|l| l.to_ascii_uppercase()).unwrap_or_default();
    if first.starts_with("INCONSISTENT") {
        let mut discrepancies: Vec<String> = lines[1..].iter().map(|l| l.to_string()).collect();
        let inline = lines[0][12..].trim_start_matches([':', ' ']).trim();
        if !inline.is_empty() {
            discrepancies.insert(0, inline.to_string());
        }
        if discrepancies.is_empty() {
            discrepancies.push("unspecified".into());
        }
        return ConsistencyVerdict {
            consistent: false,
            discrepancies,
            parse_warning: false,
        };
    }
    ConsistencyVerdict {
        consistent: true,
        discrepancies: Vec::new(),
        parse_warning: !first.starts_with("CONSISTENT"),
    }
}

/// One TRANSLATE response, or the reason there is none.
pub type Draft = std::result::Result<(String, u64), GatewayError>;

pub fn request_drafts(
    unit_id: &str,
    ctx: &PromptContext,
    gateway: &Gateway,
    templates: &TemplateSet,
    config: &RefineConfig,
) -> Vec<Draft> {
    let n = config.budgets.candidates.max(1);
    let prompt = ctx.translate_prompt(templates);
    (0..n)
        .map(|_| {
            let mut req = CompletionRequest::new(TaskTag::Translate, Some(unit_id), prompt.clone());
            if n > 1 {
                req.params.temperature = config.candidate_temperature;
            }
            gateway.complete(&req).map(|c| (c.text, c.usage.total()))
        })
        .collect()
}

pub struct RefineInput<'a> {
    pub unit_id: &'a str,
    pub ctx: &'a PromptContext,
    pub scaffold: &'a Scaffold,
    /// Pre-fetched TRANSLATE responses (members of a cycle are drafted together).
    pub drafts: Option<Vec<Draft>>,
}

struct Loop<'a> {
    input: &'a RefineInput<'a>,
    gateway: &'a Gateway,
    toolchain: &'a Toolchain,
    config: &'a RefineConfig,
    attempts: Vec<Attempt>,
    trace: Vec<String>,
    notes: Vec<String>,
    calls: u32,
}

enum Produced {
    Attempt(usize),
    Empty,
    GatewayDown,
}

impl Loop<'_> {
    fn compile(&self, code: &str) -> Result<CompileReport> {
        compile_unit(
            code,
            self.input.unit_id,
            self.input.scaffold,
            self.toolchain,
            self.config.keep_artifacts,
        )
    }

    /// Turns a completion into a compiled attempt.
    fn absorb(&mut self, stage: Stage, response: Draft) -> Result<Produced> {
        let (text, tokens) = match response {
            Ok(r) => r,
            Err(e) => {
                self.notes.push(format!("{stage:?} request failed: {e}"));
                self.trace.push("gateway-unavailable".into());
                if self.attempts.is_empty() {
                    self.attempts.push(Attempt {
                        stage,
                        code: String::new(),
                        extraction: None,
                        report: CompileReport::synthetic(Diagnostic::synthetic("gateway-unavailable", e.to_string())),
                        verdict: None,
                        tokens: 0,
                    });
                }
                return Ok(Produced::GatewayDown);
            }
        };
        let extracted = match extract_code_block(&text) {
            Ok(x) => x,
            Err(e) => {
                self.notes.push(format!("{stage:?} response had no code"));
                self.attempts.push(Attempt {
                    stage,
                    code: String::new(),
                    extraction: None,
                    report: CompileReport::synthetic(Diagnostic::synthetic("empty-completion", e.to_string())),
                    verdict: None,
                    tokens,
                });
                return Ok(Produced::Empty);
            }
        };
        self.trace.push("compile".into());
        let report = self.compile(&extracted.code)?;
        self.attempts.push(Attempt {
            stage,
            code: extracted.code,
            extraction: Some(extracted.path),
            report,
            verdict: None,
            tokens,
        });
        Ok(Produced::Attempt(self.attempts.len() - 1))
    }

    fn ask(&mut self, task: TaskTag, prompt: String) -> Draft {
        self.calls += 1;
        let req = CompletionRequest::new(task, Some(self.input.unit_id), prompt);
        self.gateway.complete(&req).map(|c| (c.text, c.usage.total()))
    }

    fn prior(&self) -> String {
        self.input.ctx.render_prior()
    }
}

pub fn refine_unit(
    input: &RefineInput<'_>,
    gateway: &Gateway,
    templates: &TemplateSet,
    toolchain: &Toolchain,
    config: &RefineConfig,
) -> Result<TranslationRecord> {
    let mut lp = Loop {
        input,
        gateway,
        toolchain,
        config,
        attempts: Vec::new(),
        trace: Vec::new(),
        notes: Vec::new(),
        calls: 0,
    };
    let budgets = config.budgets;
    let mut used = BudgetUsed::default();

    let drafts = match &input.drafts {
        Some(d) => d.clone(),
        None => request_drafts(input.unit_id, input.ctx, gateway, templates, config),
    };
    lp.calls += drafts.len() as u32;
    let mut candidates = Vec::new();
    for draft in drafts {
        lp.trace.push("translate".into());
        if let Produced::Attempt(i) = lp.absorb(Stage::Translate, draft)? {
            candidates.push(i);
        }
    }
    let mut ranking = None;
    let mut current = match candidates.len() {
        0 => None,
        1 => Some(candidates[0]),
        _ => {
            let evals: Vec<CandidateEval> = candidates
                .iter()
                .map(|&i| CandidateEval {
                    n_err: lp.attempts[i].report.n_err as u32,
                    ..Default::default()
                })
                .collect();
            let r = rank_candidates(&evals, config.alpha, config.beta)?;
            lp.trace
                .push(format!("rank: candidate {} of {}", r.best + 1, evals.len()));
            let best = candidates[r.best];
            ranking = Some(r);
            Some(best)
        }
    };

    if budgets.compile_iters == 0 {
        lp.trace.push("compile-repair: skipped (budget 0)".into());
    }
    while let Some(cur) = current {
        if lp.attempts[cur].report.n_err == 0 || used.compile_iters >= budgets.compile_iters {
            break;
        }
        used.compile_iters += 1;
        lp.trace.push("compile-repair".into());
        let a = &lp.attempts[cur];
        let prompt = render(
            &templates.repair,
            &[
                ("DIAGNOSTICS", &format_diagnostics(&a.report)),
                ("CODE", &a.code),
                ("SOURCE", &input.ctx.source),
                ("PRIOR", &lp.prior()),
                ("DEPS", &input.ctx.render_deps()),
            ],
        );
        let response = lp.ask(TaskTag::Repair, prompt);
        match lp.absorb(Stage::CompileRepair, response)? {
            Produced::Attempt(i) => current = Some(i),
            Produced::Empty => {}
            Produced::GatewayDown => break,
        }
    }

    let compiled = current.filter(|&c| lp.attempts[c].report.n_err == 0 && lp.attempts[c].report.success);
    if budgets.consistency_iters == 0 {
        lp.trace.push("consistency: skipped (budget 0)".into());
    } else if compiled.is_none() {
        lp.trace.push("consistency: skipped (not compiled)".into());
    }
    let mut current = compiled;
    while let Some(cur) = current {
        if used.consistency_iters >= budgets.consistency_iters {
            break;
        }
        lp.trace.push("consistency-check".into());
        let prompt = render(
            &templates.consistency,
            &[("SOURCE", &input.ctx.source), ("CODE", &lp.attempts[cur].code)],
        );
        let verdict = match lp.ask(TaskTag::Consistency, prompt) {
            Ok((text, tokens)) => {
                lp.attempts[cur].tokens += tokens;
                parse_verdict(&text)
            }
            Err(e) => {
                lp.notes.push(format!("consistency check skipped: {e}"));
                lp.trace.push("gateway-unavailable".into());
                break;
            }
        };
        if verdict.parse_warning {
            lp.notes
                .push("unparseable consistency verdict read as consistent".into());
        }
        let findings = verdict.discrepancies.join("\n");
        let consistent = verdict.consistent;
        lp.attempts[cur].verdict = Some(verdict);
        if consistent {
            break;
        }
        used.consistency_iters += 1;
        lp.trace.push("consistency-repair".into());
        let prompt = render(
            &templates.consistency_repair,
            &[
                ("FINDINGS", &findings),
                ("CODE", &lp.attempts[cur].code),
                ("SOURCE", &input.ctx.source),
                ("PRIOR", &lp.prior()),
            ],
        );
        let response = lp.ask(TaskTag::Repair, prompt);
        current = match lp.absorb(Stage::ConsistencyRepair, response)? {
            Produced::Attempt(i) if lp.attempts[i].report.n_err == 0 && lp.attempts[i].report.success => Some(i),
            Produced::Attempt(_) => {
                lp.notes
                    .push("consistency repair broke compilation; keeping the earlier attempt".into());
                None
            }
            Produced::Empty | Produced::GatewayDown => None,
        };
    }

    let final_index = best_attempt(&lp.attempts);
    let fin = &lp.attempts[final_index];
    let status = if fin.report.n_err == 0 && fin.report.success {
        match &fin.verdict {
            Some(v) if v.consistent => UnitStatus::Functional,
            _ => UnitStatus::Compiled,
        }
    } else {
        UnitStatus::Failed
    };
    Ok(TranslationRecord {
        unit_id: input.unit_id.to_string(),
        final_code: fin.code.clone(),
        final_index,
        status,
        budget_used: used,
        gateway_calls: lp.calls,
        trace: lp.trace,
        notes: lp.notes,
        ranking,
        scaffold: input.scaffold.clone(),
        attempts: lp.attempts,
    })
}
