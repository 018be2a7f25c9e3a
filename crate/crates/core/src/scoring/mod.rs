//! Reward arithmetic, group-relative advantages and candidate ranking.

mod codebleu;

pub use codebleu::{codebleu, rust_code_tokens, CodeBleu, RUST_KEYWORDS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor on the group standard deviation; groups at or below it get zero advantages.
pub const ADVANTAGE_EPS: f64 = 1e-8;
pub const DEFAULT_CLIP: f64 = 0.2;

fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

/// `1 / (1 + n_err)`.
pub fn comp_reward(n_err: i64) -> Result<f64> {
    if n_err < 0 {
        return Err(contract(format!("negative error count {n_err}")));
    }
    Ok(1.0 / (1.0 + n_err as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlignInput<'a> {
    PassRate { passed: usize, total: usize },
    Similarity { candidate: &'a str, reference: &'a str },
}

pub fn align_reward(input: AlignInput<'_>) -> Result<f64> {
    match input {
        AlignInput::PassRate { total: 0, .. } => Err(contract(
            "pass-rate alignment needs at least one test; use similarity mode",
        )),
        AlignInput::PassRate { passed, total } if passed > total => {
            Err(contract(format!("{passed} passed out of {total}")))
        }
        AlignInput::PassRate { passed, total } => Ok(passed as f64 / total as f64),
        AlignInput::Similarity { candidate, reference } => Ok(codebleu(candidate, reference).total),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_comp: f64,
    pub r_align: f64,
    pub alpha: f64,
    pub beta: f64,
    pub total: f64,
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha.is_finite() && beta.is_finite()) || alpha < 0.0 || beta < 0.0 {
        return Err(contract(format!(
            "weights must be finite and non-negative, got ({alpha}, {beta})"
        )));
    }
    if alpha == 0.0 && beta == 0.0 {
        return Err(contract("reward weights are both zero"));
    }
    Ok(())
}

pub fn hybrid_reward(r_comp: f64, r_align: f64, alpha: f64, beta: f64) -> Result<RewardBreakdown> {
    check_weights(alpha, beta)?;
    Ok(RewardBreakdown {
        r_comp,
        r_align,
        alpha,
        beta,
        total: alpha * r_comp + beta * r_align,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Standardizes rewards by the group mean and population standard deviation.
pub fn group_advantages(rewards: &[f64]) -> Result<GroupScores> {
    if rewards.len() < 2 {
        return Err(contract(format!("group of {} is too small", rewards.len())));
    }
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g;
    let std = var.sqrt();
    let advantages = if std <= ADVANTAGE_EPS {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - mean) / std.max(ADVANTAGE_EPS)).collect()
    };
    Ok(GroupScores {
        rewards: rewards.to_vec(),
        advantages,
    })
}

/// `r - ln r - 1` for the reference-to-policy probability ratio `r`.
pub fn kl_estimate(ratio: f64) -> Result<f64> {
    if ratio.is_nan() || ratio <= 0.0 {
        return Err(contract(format!("probability ratio must be positive, got {ratio}")));
    }
    Ok(ratio - ratio.ln() - 1.0)
}

/// Clipped group objective: mean over the group of
/// `min(ratio * adv, clip(ratio) * adv) - beta_kl * kl(kl_ratio)`.
pub fn grpo_surrogate(
    prob_ratios: &[f64],
    advantages: &[f64],
    eps_clip: f64,
    kl_ratios: &[f64],
    beta_kl: f64,
) -> Result<f64> {
    if prob_ratios.len() != advantages.len() || prob_ratios.len() != kl_ratios.len() {
        return Err(contract(format!(
            "group lengths differ: {} ratios, {} advantages, {} kl ratios",
            prob_ratios.len(),
            advantages.len(),
            kl_ratios.len()
        )));
    }
    if prob_ratios.is_empty() {
        return Err(contract("empty group"));
    }
    if !(0.0..1.0).contains(&eps_clip) {
        return Err(contract(format!("clip range {eps_clip} outside [0, 1)")));
    }
    let mut sum = 0.0;
    for ((&rho, &adv), &kl_ratio) in prob_ratios.iter().zip(advantages).zip(kl_ratios) {
        if rho.is_nan() || rho <= 0.0 {
            return Err(contract(format!("probability ratio must be positive, got {rho}")));
        }
        let clipped = rho.clamp(1.0 - eps_clip, 1.0 + eps_clip);
        sum += (rho * adv).min(clipped * adv) - beta_kl * kl_estimate(kl_ratio)?;
    }
    Ok(sum / prob_ratios.len() as f64)
}

/// What is known about one candidate when ranking.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateEval {
    pub n_err: u32,
    /// `(passed, total)` when tests ran.
    pub tests: Option<(usize, usize)>,
    /// CodeBLEU against a reference, when one exists.
    pub similarity: Option<f64>,
}

impl CandidateEval {
    /// Pass rate when tests exist, else similarity, else zero.
    pub fn r_align(&self) -> f64 {
        match (self.tests, self.similarity) {
            (Some((p, t)), _) if t > 0 => p as f64 / t as f64,
            (_, Some(s)) => s,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub best: usize,
    pub breakdowns: Vec<RewardBreakdown>,
    pub group: Option<GroupScores>,
}

/// Argmax of the hybrid reward, ties to the lowest index.
pub fn rank_candidates(evals: &[CandidateEval], alpha: f64, beta: f64) -> Result<Ranking> {
    if evals.is_empty() {
        return Err(contract("no candidates to rank"));
    }
    let breakdowns = evals
        .iter()
        .map(|e| hybrid_reward(comp_reward(i64::from(e.n_err))?, e.r_align(), alpha, beta))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, b) in breakdowns.iter().enumerate() {
        if b.total > breakdowns[best].total {
            best = i;
        }
    }
    let group = if evals.len() >= 2 {
        Some(group_advantages(
            &breakdowns.iter().map(|b| b.total).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    Ok(Ranking {
        best,
        breakdowns,
        group,
    })
}
