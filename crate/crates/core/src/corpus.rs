//! Templated arithmetic word problems with known answers.
//!
//! Every content word of a problem (titles, surnames, place and
//! organization names, items, containers, verbs) comes from the clinic side
//! of the mock swap vocabulary, so the `context_swap` mock rewrites all of
//! them and leaves numbers and structure words in place. The templates keep
//! the structure words the `arith_solver` mock keys on (`with … each`,
//! `split equally into`, `but … of them`, `… more`).

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

const TITLES: &[&str] = &["Nurse", "Doctor", "Pharmacist", "Surgeon"];
const SURNAMES: &[&str] = &["Rivera", "Chen", "Patel", "Garcia", "Kowalski"];
const PLACES: &[&str] = &["Maple", "Willow", "Cedar", "Birch"];
const ORGS: &[&str] = &["Clinic", "Hospital", "Pharmacy", "Infirmary"];
const ITEMS: &[&str] = &["patients", "beds", "doses", "vials", "bandages", "syringes"];
/// Container nouns as (plural, singular).
const GROUPS: &[(&str, &str)] = &[("wards", "ward"), ("rooms", "room"), ("cabinets", "cabinet"), ("trays", "tray")];
const VERBS: &[&str] = &["treats", "stocks", "prepares", "orders"];
const BASE_VERBS: &[&str] = &["manage", "handle"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Add,
    Subtract,
    Multiply,
    Divide,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MathItem {
    pub id: String,
    pub question: String,
    /// Label in `#### <n>` form.
    pub answer: String,
    pub value: i64,
    pub operation: Operation,
}

/// Corpus record as written to dataset files.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetRecord<'a> {
    pub id: &'a str,
    pub question: &'a str,
    pub answer: &'a str,
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty table")
}

pub fn generate_item<R: Rng>(rng: &mut R, id: String) -> MathItem {
    let title = pick(rng, TITLES);
    let surname = pick(rng, SURNAMES);
    let place = pick(rng, PLACES);
    let org = pick(rng, ORGS);
    let items = pick(rng, ITEMS);
    let verb = pick(rng, VERBS);
    let (groups, group) = *GROUPS.choose(rng).expect("non-empty table");
    let operation = [Operation::Add, Operation::Subtract, Operation::Multiply, Operation::Divide][rng.random_range(0..4)];
    let (question, value) = match operation {
        Operation::Add => {
            let a = rng.random_range(2..=500i64);
            let b = rng.random_range(2..=500i64);
            (
                format!(
                    "{title} {surname} at {place} {org} {verb} {a} {items} and receives {b} more. \
                     How many {items} are at {place} {org} now?"
                ),
                a + b,
            )
        }
        Operation::Subtract => {
            let a = rng.random_range(20..=900i64);
            let b = rng.random_range(1..a);
            (
                format!(
                    "{title} {surname} at {place} {org} {verb} {a} {items} but {b} of them expire. \
                     How many {items} are left at {place} {org}?"
                ),
                a - b,
            )
        }
        Operation::Multiply => {
            let a = rng.random_range(2..=40i64);
            let b = rng.random_range(2..=40i64);
            let base = pick(rng, BASE_VERBS);
            (
                format!(
                    "At {place} {org}, {title} {surname} {verb} {a} {groups} with {b} {items} each. \
                     How many {items} does {title} {surname} {base} in total?"
                ),
                a * b,
            )
        }
        Operation::Divide => {
            let b = rng.random_range(2..=20i64);
            let q = rng.random_range(2..=50i64);
            let a = b * q;
            (
                format!(
                    "{title} {surname} at {place} {org} {verb} {a} {items} split equally into {b} {groups}. \
                     How many {items} does {title} {surname} put in each {group}?"
                ),
                q,
            )
        }
    };
    MathItem {
        id,
        question,
        answer: format!("#### {value}"),
        value,
        operation,
    }
}

/// `count` problems, deterministic in `seed`, with ids `math-000000`, ….
pub fn generate_corpus(count: usize, seed: u64) -> Vec<MathItem> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| generate_item(&mut rng, format!("math-{i:06}")))
        .collect()
}

/// The corpus as dataset JSONL (`id`, `question`, `answer`).
pub fn render_jsonl(items: &[MathItem]) -> String {
    let mut out = String::new();
    for it in items {
        let rec = DatasetRecord {
            id: &it.id,
            question: &it.question,
            answer: &it.answer,
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain strings serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{clinic_vocabulary, solve, swap_vocabulary, unswap_vocabulary};
    use crate::guard::{check_lexicon, check_numbers, derive_lexicon};
    use crate::metrics::{rouge, tokenize};

    #[test]
    fn every_content_word_is_in_the_swap_table() {
        let vocab: std::collections::HashSet<&str> = clinic_vocabulary().collect();
        for w in TITLES.iter().chain(SURNAMES).chain(PLACES).chain(ORGS) {
            assert!(vocab.contains(w.to_lowercase().as_str()), "{w}");
        }
        for w in ITEMS.iter().chain(VERBS).chain(BASE_VERBS).chain(["receives", "expire"].iter()) {
            assert!(vocab.contains(w), "{w}");
        }
        for (p, s) in GROUPS {
            assert!(vocab.contains(p) && vocab.contains(s));
        }
    }

    #[test]
    fn deterministic_and_solvable_after_swap() {
        let a = generate_corpus(200, 11);
        assert_eq!(a, generate_corpus(200, 11));
        assert_ne!(a, generate_corpus(200, 12));
        for it in &a {
            let swapped = swap_vocabulary(&it.question);
            assert_eq!(solve(&swapped), it.answer, "{}", it.question);
            assert_eq!(solve(&it.question), it.answer);
            assert!(check_numbers(&it.question, &swapped).passed);
            assert!(check_lexicon(&swapped, &derive_lexicon(&it.question)).passed);
            assert_eq!(unswap_vocabulary(&swapped), it.question);
            let r1 = rouge(&tokenize(&swapped), &tokenize(&it.question)).rouge_1;
            assert!(r1 < 0.6, "{r1} for {}", it.question);
        }
    }

    #[test]
    fn jsonl_shape() {
        let items = generate_corpus(2, 0);
        let text = render_jsonl(&items);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["id"], "math-000000");
        assert!(first["answer"].as_str().unwrap().starts_with("#### "));
    }
}
