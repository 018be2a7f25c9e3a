mod common;

use crosswalk_core::scoring::{
    codebleu, comp_reward, group_advantages, grpo_surrogate, kl_estimate, rank_candidates, CandidateEval,
};
use proptest::prelude::*;

use common::oracles::{surrogate_termwise, welford};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn comp_reward_fixed_points() {
    assert_eq!(comp_reward(0).unwrap(), 1.0);
    assert_eq!(comp_reward(1).unwrap(), 0.5);
    assert_eq!(comp_reward(9).unwrap(), 0.1);
    assert!(comp_reward(-1).is_err());
}

#[test]
fn advantages_of_one_two_three() {
    let rewards = [1.0, 2.0, 3.0];
    let got = group_advantages(&rewards).unwrap().advantages;
    let (mean, sd) = welford(&rewards);
    // sqrt(3/2) by hand: population variance of 1, 2, 3 is 2/3.
    let expected = [-(1.5f64).sqrt(), 0.0, (1.5f64).sqrt()];
    for i in 0..3 {
        assert!(close(got[i], (rewards[i] - mean) / sd, 1e-12));
        assert!(close(got[i], expected[i], 1e-12));
    }
    assert!(close(got[2], 1.2247, 1e-4));
}

#[test]
fn kl_reference_points() {
    use std::f64::consts::LN_2;
    assert!(close(kl_estimate(2.0).unwrap(), 1.0 - LN_2, 1e-15));
    assert!(close(kl_estimate(0.5).unwrap(), LN_2 - 0.5, 1e-15));
    assert!(close(kl_estimate(2.0).unwrap(), 0.30685, 1e-5));
    assert!(close(kl_estimate(0.5).unwrap(), 0.19315, 1e-5));
    assert_eq!(kl_estimate(1.0).unwrap(), 0.0);
    assert!(kl_estimate(0.0).is_err());
}

fn ln_ratio(a: f64, b: f64) -> f64 {
    (a / b).ln()
}

/// Candidate differs from the reference in one integer literal.
#[test]
fn codebleu_literal_swap_matches_hand_count() {
    let reference = "fn f(a: i32) -> i32 { a + 2 }";
    let candidate = "fn f(a: i32) -> i32 { a + 1 }";
    let s = codebleu(candidate, reference);
    // 14 tokens each; the `1` spoils 1 unigram, 2 bigrams, 2 trigrams, 2 four-grams.
    let higher = ln_ratio(12.0, 14.0) + ln_ratio(11.0, 13.0) + ln_ratio(10.0, 12.0);
    let bleu = (0.25 * (ln_ratio(13.0, 14.0) + higher)).exp();
    // Unigram weights: `fn` 1.0, the other 13 tokens 0.2 each.
    let weighted = (0.25 * (ln_ratio(3.4, 3.6) + higher)).exp();
    assert!(close(s.bleu, bleu, 1e-12), "{} vs {bleu}", s.bleu);
    assert!(close(s.weighted_bleu, weighted, 1e-12));
    // Syntax shapes ignore literal text; both have the single parameter edge.
    assert_eq!(s.syntax, 1.0);
    assert_eq!(s.dataflow, 1.0);
    assert!(close(s.total, 0.25 * (bleu + weighted + 2.0), 1e-12));
}

/// Candidate drops an intermediate binding.
#[test]
fn codebleu_dropped_binding_matches_hand_count() {
    let reference = "fn f(a: i32) -> i32 { let b = a; b }";
    let candidate = "fn f(a: i32) -> i32 { a }";
    let s = codebleu(candidate, reference);
    // 12 candidate tokens against 17: all unigrams match, 9/11 bigrams,
    // 8/10 trigrams, 7/9 four-grams, brevity penalty exp(1 - 17/12).
    let bleu = (1.0f64 - 17.0 / 12.0).exp()
        * (0.25 * (ln_ratio(10.0, 12.0) + ln_ratio(9.0, 11.0) + ln_ratio(8.0, 10.0))).exp();
    assert!(close(s.bleu, bleu, 1e-12), "{} vs {bleu}", s.bleu);
    assert!(close(s.weighted_bleu, bleu, 1e-12));
    // Reference shapes: source_file, function_item, block, let_declaration
    // (unmatched), parameters, parameter, 2 primitive types (matched), and
    // 5 identifiers of which the candidate has 3.
    assert!(close(s.syntax, 7.0 / 13.0, 1e-12), "{}", s.syntax);
    // Reference edges: parameter, b <- a. The candidate keeps only the first.
    assert_eq!(s.dataflow, 0.5);

    let swapped = codebleu(reference, candidate);
    assert_ne!(swapped.syntax, s.syntax);
    assert_ne!(swapped.dataflow, s.dataflow);
}

fn small_rust_fn() -> impl Strategy<Value = String> {
    (
        "[a-z]{1,6}",
        proptest::collection::vec(("[a-z]{1,4}", 0i64..100), 0..4),
        prop::sample::select(vec!["+", "-", "*", "^"]),
    )
        .prop_map(|(name, lets, op)| {
            let mut body = String::new();
            let mut last = "x".to_string();
            for (i, (v, k)) in lets.iter().enumerate() {
                let var = format!("{v}{i}");
                body.push_str(&format!("    let {var} = {last} {op} {k};\n"));
                last = var;
            }
            format!("pub fn {name}(x: i64) -> i64 {{\n{body}    {last}\n}}\n")
        })
}

fn group() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-100.0f64..100.0, 2..64)
}

proptest! {
    #[test]
    fn comp_reward_decreases_within_unit_interval(n in 0i64..10_000) {
        let a = comp_reward(n).unwrap();
        let b = comp_reward(n + 1).unwrap();
        prop_assert!(a > b);
        prop_assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn advantages_are_standardized(rewards in group()) {
        let adv = group_advantages(&rewards).unwrap().advantages;
        let (_, sd) = welford(&rewards);
        if sd > 1e-8 {
            let (am, asd) = welford(&adv);
            prop_assert!(am.abs() < 1e-9);
            prop_assert!((asd - 1.0).abs() < 1e-6);
        } else {
            prop_assert!(adv.iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn advantages_ignore_a_shift(rewards in group(), shift in -1e3f64..1e3) {
        let a = group_advantages(&rewards).unwrap().advantages;
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let b = group_advantages(&shifted).unwrap().advantages;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
        }
    }

    #[test]
    fn kl_is_nonnegative(log_r in -20.0f64..20.0) {
        let r = log_r.exp();
        prop_assert!(kl_estimate(r).unwrap() >= 0.0);
    }

    #[test]
    fn surrogate_matches_termwise_oracle(
        rows in proptest::collection::vec((0.05f64..3.0, -3.0f64..3.0, 0.05f64..3.0), 1..=8),
        eps in 0.0f64..0.5,
        beta in 0.0f64..1.0,
    ) {
        let ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let adv: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let kl: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let got = grpo_surrogate(&ratios, &adv, eps, &kl, beta).unwrap();
        let want = surrogate_termwise(&ratios, &adv, eps, &kl, beta);
        prop_assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn surrogate_is_unclipped_inside_the_trust_region(
        rows in proptest::collection::vec((0.8f64..=1.2, -3.0f64..3.0, 0.5f64..2.0), 1..=16),
        beta in 0.0f64..1.0,
    ) {
        let ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let adv: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let kl: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let got = grpo_surrogate(&ratios, &adv, 0.2, &kl, beta).unwrap();
        let n = ratios.len() as f64;
        let plain = ratios.iter().zip(&adv).map(|(r, a)| r * a).sum::<f64>() / n
            - beta * kl.iter().map(|q| q - q.ln() - 1.0).sum::<f64>() / n;
        prop_assert!((got - plain).abs() < 1e-12);
    }

    #[test]
    fn ranking_ignores_joint_weight_scaling(
        evals in proptest::collection::vec((0u32..6, 0.0f64..1.0), 1..8),
        alpha in 0.01f64..2.0,
        beta in 0.0f64..2.0,
        scale in 0.01f64..100.0,
    ) {
        let evals: Vec<CandidateEval> = evals
            .into_iter()
            .map(|(n_err, s)| CandidateEval { n_err, tests: None, similarity: Some(s) })
            .collect();
        let a = rank_candidates(&evals, alpha, beta).unwrap().best;
        let b = rank_candidates(&evals, alpha * scale, beta * scale).unwrap().best;
        // A scaled tie can break differently only when two totals are within rounding.
        let totals = rank_candidates(&evals, alpha, beta).unwrap().breakdowns;
        if a != b {
            prop_assert!((totals[a].total - totals[b].total).abs() < 1e-9);
        }
    }

    #[test]
    fn codebleu_of_identical_code_is_one(code in small_rust_fn()) {
        let s = codebleu(&code, &code);
        prop_assert!((s.total - 1.0).abs() < 1e-12, "{:?}", s);
    }
}
