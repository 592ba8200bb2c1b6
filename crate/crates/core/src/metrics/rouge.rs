//! ROUGE-1, ROUGE-2 and ROUGE-L as F1 scores.
//!
//! ROUGE-N counts clipped n-gram overlap. When neither side has any n-grams
//! of order n (both texts are shorter than n tokens), ROUGE-N takes the
//! order n−1 score instead, so a one-token identical pair scores 1 on
//! ROUGE-2 as well. ROUGE-L uses the longest common subsequence.

use serde::{Deserialize, Serialize};

use super::bleu::ngram_counts;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    /// Set when the reference had no tokens and all scores are zero.
    pub empty_reference: bool,
}

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let ct: usize = cand.values().sum();
    let rt: usize = refc.values().sum();
    if ct == 0 && rt == 0 {
        return if n > 1 { rouge_n(candidate, reference, n - 1) } else { 0.0 };
    }
    let overlap: usize = cand
        .iter()
        .map(|(g, c)| (*c).min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    f1(overlap, ct, rt)
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> f64 {
    f1(lcs_len(candidate, reference), candidate.len(), reference.len())
}

pub fn rouge(candidate: &[String], reference: &[String]) -> RougeScores {
    if reference.is_empty() {
        return RougeScores {
            empty_reference: true,
            ..Default::default()
        };
    }
    RougeScores {
        rouge_1: rouge_n(candidate, reference, 1),
        rouge_2: rouge_n(candidate, reference, 2),
        rouge_l: rouge_l(candidate, reference),
        empty_reference: false,
    }
}
