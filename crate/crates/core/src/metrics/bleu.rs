//! Sentence-level BLEU-1..4 with a single reference.
//!
//! `p_n` is the clipped modified n-gram precision. When the candidate has
//! no n-grams of order n at all (it is shorter than n tokens), both the
//! clipped count and the total are smoothed by [`EPSILON`], so `p_n` is
//! `ε/ε = 1` and a short candidate is judged on the orders it can express.
//! An order with candidate n-grams but no clipped match gives `p_n = 0`.
//!
//! `bleu_n` is the usual cumulative score `BP · exp(mean(ln p_1..p_n))`
//! (zero if any of those precisions is zero), with brevity penalty
//! `BP = 1` if `c > r`, else `exp(1 − r/c)`. `bleu_avg` is the arithmetic
//! mean of `bleu_1..bleu_4`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BleuScores {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub bleu_avg: f64,
    /// Set when the candidate had no tokens and all scores are zero.
    pub empty_candidate: bool,
}

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped modified precision for order `n`.
pub fn modified_precision(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    let total: usize = cand.values().sum();
    if total == 0 {
        return EPSILON / EPSILON;
    }
    let refc = ngram_counts(reference, n);
    let clipped: usize = cand
        .iter()
        .map(|(g, c)| (*c).min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    clipped as f64 / total as f64
}

pub fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

pub fn bleu(candidate: &[String], reference: &[String]) -> BleuScores {
    if candidate.is_empty() {
        return BleuScores {
            empty_candidate: true,
            ..Default::default()
        };
    }
    let bp = brevity_penalty(candidate.len(), reference.len());
    let p: Vec<f64> = (1..=4).map(|n| modified_precision(candidate, reference, n)).collect();
    let cumulative = |n: usize| {
        if p[..n].iter().any(|&x| x == 0.0) {
            0.0
        } else {
            bp * (p[..n].iter().map(|x| x.ln()).sum::<f64>() / n as f64).exp()
        }
    };
    let (b1, b2, b3, b4) = (cumulative(1), cumulative(2), cumulative(3), cumulative(4));
    BleuScores {
        bleu_1: b1,
        bleu_2: b2,
        bleu_3: b3,
        bleu_4: b4,
        bleu_avg: (b1 + b2 + b3 + b4) / 4.0,
        empty_candidate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identity_and_disjoint() {
        let s = toks("a b c d e f");
        assert_eq!(bleu(&s, &s).bleu_avg, 1.0);
        assert_eq!(bleu(&s, &toks("u v w x y z")).bleu_avg, 0.0);
        assert_eq!(bleu(&toks("a"), &toks("a")).bleu_avg, 1.0);
    }

    #[test]
    fn one_substitution() {
        let b = bleu(&toks("a b c d"), &toks("a b x d"));
        assert_eq!(b.bleu_1, 0.75);
        // p2 = 1/3, p3 = 0
        assert!((b.bleu_2 - (0.75f64 * (1.0 / 3.0)).sqrt()).abs() < 1e-15);
        assert_eq!(b.bleu_3, 0.0);
    }

    #[test]
    fn clipping() {
        assert_eq!(modified_precision(&toks("the the the"), &toks("the cat"), 1), 1.0 / 3.0);
    }

    #[test]
    fn empty_candidate_flagged() {
        let b = bleu(&[], &toks("a"));
        assert!(b.empty_candidate);
        assert_eq!(b.bleu_avg, 0.0);
    }
}
