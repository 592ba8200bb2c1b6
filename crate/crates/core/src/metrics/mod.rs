//! Text similarity and accuracy metrics.
//!
//! All similarity metrics are sentence-level over [`tokenize`] output and
//! aggregated by arithmetic mean. Scores lie in `[0, 1]`.

pub mod accuracy;
pub mod bleu;
pub mod meteor;
pub mod report;
pub mod rouge;
pub mod tokenize;

pub use accuracy::{accuracy, AccuracyReport, Task};
pub use bleu::{bleu, BleuScores};
pub use meteor::{meteor, MeteorScore};
pub use report::{
    score_pair, similarity_report, Direction, MetricContext, MetricReport, OptionalScore, PairScores, Scores, TextPair,
};
pub use rouge::{rouge, RougeScores};
pub use tokenize::tokenize;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(c in "\\PC{0,60}", r in "\\PC{0,60}") {
            let p = score_pair("x", &c, &r, 10_000);
            for m in report::SIMILARITY_METRICS {
                let v = p.scores.get(m).unwrap();
                prop_assert!((0.0..=1.0).contains(&v), "{m} = {v}");
            }
        }

        #[test]
        fn identity_scores(words in proptest::collection::vec("[a-z]{1,6}", 1..15)) {
            let text = words.join(" ");
            let t = tokenize(&text);
            let b = bleu(&t, &t);
            let r = rouge(&t, &t);
            prop_assert_eq!(b.bleu_avg, 1.0);
            prop_assert_eq!((r.rouge_1, r.rouge_2, r.rouge_l), (1.0, 1.0, 1.0));
            let m = meteor(&t, &t);
            prop_assert!((m.score - (1.0 - m.penalty)).abs() < 1e-12);
        }

        #[test]
        fn disjoint_scores(n in 1usize..10, k in 1usize..10) {
            let c: Vec<String> = (0..n).map(|i| format!("c{i}x")).collect();
            let r: Vec<String> = (0..k).map(|i| format!("r{i}y")).collect();
            prop_assert_eq!(bleu(&c, &r).bleu_avg, 0.0);
            let ro = rouge(&c, &r);
            prop_assert_eq!((ro.rouge_1, ro.rouge_2, ro.rouge_l), (0.0, 0.0, 0.0));
            prop_assert_eq!(meteor(&c, &r).score, 0.0);
        }
    }
}
