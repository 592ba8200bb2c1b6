//! Per-pair similarity scores and their aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bleu::bleu;
use super::meteor::meteor_with_budget;
use super::rouge::rouge;
use super::tokenize::{tokenize, TOKENIZER_VERSION};

/// Whether larger values mean a better outcome in the report's context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// What a similarity score is measuring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricContext {
    /// Response quality against labels.
    Utility,
    /// Restored answers against references.
    Experience,
    /// Transformed input against original input: similarity is leakage.
    Privacy,
}

impl MetricContext {
    pub fn direction(self) -> Direction {
        match self {
            MetricContext::Utility | MetricContext::Experience => Direction::HigherBetter,
            MetricContext::Privacy => Direction::LowerBetter,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "utility" => Some(MetricContext::Utility),
            "experience" => Some(MetricContext::Experience),
            "privacy" => Some(MetricContext::Privacy),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricContext::Utility => "utility",
            MetricContext::Experience => "experience",
            MetricContext::Privacy => "privacy",
        }
    }
}

pub const SIMILARITY_METRICS: [&str; 9] = [
    "bleu_avg", "bleu_1", "bleu_2", "bleu_3", "bleu_4", "meteor", "rouge_1", "rouge_2", "rouge_l",
];

/// BERTScore column: always reported, `"absent"` unless a value exists.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OptionalScore {
    Value(f64),
    #[default]
    Absent,
}

impl Serialize for OptionalScore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            OptionalScore::Value(v) => s.serialize_f64(*v),
            OptionalScore::Absent => s.serialize_str("absent"),
        }
    }
}

impl<'de> Deserialize<'de> for OptionalScore {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(OptionalScore::Value)
                .ok_or_else(|| serde::de::Error::custom("bad number")),
            serde_json::Value::String(s) if s == "absent" => Ok(OptionalScore::Absent),
            other => Err(serde::de::Error::custom(format!("expected a number or \"absent\", got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPair {
    pub id: String,
    pub candidate: String,
    pub reference: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub bleu_avg: f64,
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub meteor: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub bertscore: OptionalScore,
}

impl Scores {
    pub fn get(&self, metric: &str) -> Option<f64> {
        Some(match metric {
            "bleu_avg" => self.bleu_avg,
            "bleu_1" => self.bleu_1,
            "bleu_2" => self.bleu_2,
            "bleu_3" => self.bleu_3,
            "bleu_4" => self.bleu_4,
            "meteor" => self.meteor,
            "rouge_1" => self.rouge_1,
            "rouge_2" => self.rouge_2,
            "rouge_l" => self.rouge_l,
            _ => return None,
        })
    }

    fn values_mut(&mut self) -> [&mut f64; 9] {
        [
            &mut self.bleu_avg,
            &mut self.bleu_1,
            &mut self.bleu_2,
            &mut self.bleu_3,
            &mut self.bleu_4,
            &mut self.meteor,
            &mut self.rouge_1,
            &mut self.rouge_2,
            &mut self.rouge_l,
        ]
    }

    /// Arithmetic mean of each metric.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Scores>) -> Scores {
        let mut acc = Scores::default();
        let mut n = 0usize;
        for s in items {
            n += 1;
            let mut s = *s;
            for (a, v) in acc.values_mut().into_iter().zip(s.values_mut()) {
                *a += *v;
            }
        }
        if n > 0 {
            for a in acc.values_mut() {
                *a /= n as f64;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub id: String,
    #[serde(flatten)]
    pub scores: Scores,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub context: MetricContext,
    pub directions: BTreeMap<String, Direction>,
    pub tokenizer: String,
    pub n_pairs: usize,
    pub aggregate: Scores,
    pub pairs: Vec<PairScores>,
}

impl MetricReport {
    /// Number of pairs carrying the given flag.
    pub fn flag_count(&self, flag: &str) -> usize {
        self.pairs.iter().filter(|p| p.flags.iter().any(|f| f == flag)).count()
    }
}

pub const FLAG_EMPTY_CANDIDATE: &str = "empty_candidate";
pub const FLAG_EMPTY_REFERENCE: &str = "empty_reference";
pub const FLAG_METEOR_NOT_OPTIMAL: &str = "meteor_search_budget_exhausted";

pub fn score_pair(id: &str, candidate: &str, reference: &str, meteor_budget: u64) -> PairScores {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    let b = bleu(&c, &r);
    let ro = rouge(&c, &r);
    let m = meteor_with_budget(&c, &r, meteor_budget);
    let mut flags = Vec::new();
    if b.empty_candidate {
        flags.push(FLAG_EMPTY_CANDIDATE.to_string());
    }
    if ro.empty_reference {
        flags.push(FLAG_EMPTY_REFERENCE.to_string());
    }
    if !m.optimal {
        flags.push(FLAG_METEOR_NOT_OPTIMAL.to_string());
    }
    PairScores {
        id: id.to_string(),
        scores: Scores {
            bleu_avg: b.bleu_avg,
            bleu_1: b.bleu_1,
            bleu_2: b.bleu_2,
            bleu_3: b.bleu_3,
            bleu_4: b.bleu_4,
            meteor: m.score,
            rouge_1: ro.rouge_1,
            rouge_2: ro.rouge_2,
            rouge_l: ro.rouge_l,
            bertscore: OptionalScore::Absent,
        },
        flags,
    }
}

/// Score every pair (in parallel, order preserved) and aggregate.
pub fn similarity_report(
    context: MetricContext,
    pairs: &[TextPair],
    parallelism: usize,
    meteor_budget: u64,
) -> MetricReport {
    let workers = parallelism.max(1).min(pairs.len().max(1));
    let chunk = pairs.len().div_ceil(workers).max(1);
    let scored: Vec<PairScores> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|p| score_pair(&p.id, &p.candidate, &p.reference, meteor_budget))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("scoring thread panicked"))
            .collect()
    });
    let direction = context.direction();
    let mut directions: BTreeMap<String, Direction> = SIMILARITY_METRICS
        .iter()
        .map(|m| (m.to_string(), direction))
        .collect();
    directions.insert("bertscore".into(), direction);
    MetricReport {
        context,
        directions,
        tokenizer: TOKENIZER_VERSION.to_string(),
        n_pairs: scored.len(),
        aggregate: Scores::mean(scored.iter().map(|p| &p.scores)),
        pairs: scored,
    }
}
