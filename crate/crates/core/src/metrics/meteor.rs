//! Simplified METEOR: exact unigram matches only (no stemming, no synonyms).
//!
//! The alignment maximizes the number of matched unigrams `m` and, among
//! maximal alignments, minimizes the number of chunks (runs of matches that
//! are adjacent in both candidate and reference). Then
//!
//! ```text
//! P = m / |candidate|      R = m / |reference|
//! F_mean  = 10·P·R / (R + 9·P)
//! penalty = 0.5 · (chunks / m)^3
//! score   = F_mean · (1 − penalty)          (0 when m = 0)
//! ```
//!
//! Minimizing chunks over alignments is a minimum common string partition
//! problem, which is NP-hard in general. The search below is an exact
//! branch-and-bound that is instant for sentences with few repeated words.
//! It gives up after a node budget and keeps the best alignment found;
//! [`MeteorScore::optimal`] reports whether the chunk count is proven
//! minimal.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const DEFAULT_SEARCH_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeteorScore {
    pub score: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_mean: f64,
    pub penalty: f64,
    pub matches: usize,
    pub chunks: usize,
    pub optimal: bool,
}

pub fn meteor(candidate: &[String], reference: &[String]) -> MeteorScore {
    meteor_with_budget(candidate, reference, DEFAULT_SEARCH_BUDGET)
}

pub fn meteor_with_budget(candidate: &[String], reference: &[String], budget: u64) -> MeteorScore {
    let (matches, chunks, optimal) = align(candidate, reference, budget);
    score_from_counts(candidate.len(), reference.len(), matches, chunks, optimal)
}

/// Evaluate the formula for given alignment statistics.
pub fn score_from_counts(
    cand_len: usize,
    ref_len: usize,
    matches: usize,
    chunks: usize,
    optimal: bool,
) -> MeteorScore {
    if matches == 0 {
        return MeteorScore {
            optimal,
            ..Default::default()
        };
    }
    let m = matches as f64;
    let precision = m / cand_len as f64;
    let recall = m / ref_len as f64;
    let f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    MeteorScore {
        score: f_mean * (1.0 - penalty),
        precision,
        recall,
        f_mean,
        penalty,
        matches,
        chunks,
        optimal,
    }
}

struct Search {
    cand: Vec<usize>,
    refs: Vec<usize>,
    /// Reference positions of each word id.
    ref_pos: Vec<Vec<usize>>,
    /// Occurrences of `cand[i]` at positions `>= i`.
    rem_c: Vec<usize>,
    need: Vec<usize>,
    used: Vec<bool>,
    best: usize,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl Search {
    fn dfs(&mut self, i: usize, left: usize, last: Option<(usize, usize)>, chunks: usize) {
        if left == 0 || i == self.cand.len() {
            if left == 0 && chunks < self.best {
                self.best = chunks;
            }
            return;
        }
        if self.best != usize::MAX {
            self.nodes += 1;
            if self.nodes > self.budget {
                self.exhausted = true;
                return;
            }
        }
        let adjacent = matches!(last, Some((li, _)) if li + 1 == i);
        let bound = chunks + usize::from(!adjacent);
        if bound >= self.best {
            return;
        }
        let w = self.cand[i];
        if self.need[w] > 0 {
            let extend = last.and_then(|(li, lj)| {
                (li + 1 == i && lj + 1 < self.refs.len() && self.refs[lj + 1] == w && !self.used[lj + 1])
                    .then_some(lj + 1)
            });
            let mut options: Vec<usize> = Vec::new();
            options.extend(extend);
            options.extend(
                self.ref_pos[w]
                    .iter()
                    .copied()
                    .filter(|j| !self.used[*j] && Some(*j) != extend),
            );
            for j in options {
                let new_chunks = if Some(j) == extend { chunks } else { chunks + 1 };
                if new_chunks >= self.best {
                    continue;
                }
                self.used[j] = true;
                self.need[w] -= 1;
                self.dfs(i + 1, left - 1, Some((i, j)), new_chunks);
                self.need[w] += 1;
                self.used[j] = false;
                if self.exhausted {
                    return;
                }
            }
        }
        if self.rem_c[i] > self.need[w] {
            self.dfs(i + 1, left, last, chunks);
        }
    }
}

/// Returns `(matches, chunks, proven_optimal)`.
pub fn align(candidate: &[String], reference: &[String], budget: u64) -> (usize, usize, bool) {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut cand = Vec::with_capacity(candidate.len());
    let mut refs = Vec::with_capacity(reference.len());
    for (toks, out) in [(candidate, &mut cand), (reference, &mut refs)] {
        for t in toks {
            let n = ids.len();
            out.push(*ids.entry(t.as_str()).or_insert(n));
        }
    }
    let nw = ids.len();

    let mut cc = vec![0usize; nw];
    let mut rc = vec![0usize; nw];
    let mut ref_pos = vec![Vec::new(); nw];
    for &w in &cand {
        cc[w] += 1;
    }
    for (j, &w) in refs.iter().enumerate() {
        rc[w] += 1;
        ref_pos[w].push(j);
    }
    let need: Vec<usize> = (0..nw).map(|w| cc[w].min(rc[w])).collect();
    let matches: usize = need.iter().sum();
    if matches == 0 {
        return (0, 0, true);
    }
    let mut rem_c = vec![0usize; cand.len()];
    let mut seen = vec![0usize; nw];
    for i in (0..cand.len()).rev() {
        seen[cand[i]] += 1;
        rem_c[i] = seen[cand[i]];
    }
    let mut s = Search {
        cand,
        used: vec![false; refs.len()],
        refs,
        ref_pos,
        rem_c,
        need,
        best: usize::MAX,
        nodes: 0,
        budget,
        exhausted: false,
    };
    s.dfs(0, matches, None, 0);
    (matches, s.best, !s.exhausted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn formula_fixtures() {
        let one = meteor(&toks("a"), &toks("a"));
        assert_eq!((one.matches, one.chunks), (1, 1));
        assert_eq!(one.score, 0.5);
        let ten = toks("a b c d e f g h i j");
        let s = meteor(&ten, &ten);
        assert_eq!(s.chunks, 1);
        assert!((s.score - 0.9995).abs() < 1e-15);
        assert_eq!(meteor(&toks("a"), &toks("b")).score, 0.0);
    }

    #[test]
    fn prefers_fewer_chunks_among_maximal_alignments() {
        // Greedy left-to-right would align the first "a" to the first "a"
        // and split "a b" into two chunks.
        let (m, ch, opt) = align(&toks("a b"), &toks("a x a b"), DEFAULT_SEARCH_BUDGET);
        assert_eq!((m, ch, opt), (2, 1, true));
        let (m, ch, _) = align(&toks("the cat the dog"), &toks("the dog the cat"), DEFAULT_SEARCH_BUDGET);
        assert_eq!((m, ch), (4, 2));
    }

    #[test]
    fn tiny_budget_is_flagged_but_valid() {
        let c = toks("a a a a a a a a b a a a a a a a");
        let r = toks("a a a a a a a b a a a a a a a a");
        let s = meteor_with_budget(&c, &r, 3);
        assert!(s.score > 0.0 && s.score <= 1.0);
        assert_eq!(s.matches, 16);
    }
}
