//! Answer extraction and task accuracy.
//!
//! * `math`: the answer is the first numeral after the last `####` marker.
//!   Without a marker it is the last numeral in the text. A `-` directly in
//!   front of the numeral (and not preceded by a letter or digit) makes it
//!   negative. Values are compared after numeral normalization.
//! * `nli`: the answer is the earliest whole-word, case-insensitive
//!   occurrence of `entailment`, `neutral` or `contradiction`.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::numerals::extract_numerals;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[serde(alias = "math")]
    MathNumeric,
    #[serde(alias = "nli")]
    NliLabel,
}

impl Task {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "math" | "math_numeric" => Some(Task::MathNumeric),
            "nli" | "nli_label" => Some(Task::NliLabel),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::MathNumeric => "math_numeric",
            Task::NliLabel => "nli_label",
        }
    }
}

pub const ANSWER_MARKER: &str = "####";

fn signed_numeral(text: &str, n: &crate::numerals::Numeral) -> String {
    let before = &text[..n.span.start];
    let negative = before.ends_with('-')
        && !before[..before.len() - 1]
            .chars()
            .next_back()
            .is_some_and(char::is_alphanumeric);
    if negative && n.value != "0" {
        format!("-{}", n.value)
    } else {
        n.value.clone()
    }
}

pub fn extract_math_answer(text: &str) -> Option<String> {
    if let Some(pos) = text.rfind(ANSWER_MARKER) {
        let tail = &text[pos + ANSWER_MARKER.len()..];
        return extract_numerals(tail).first().map(|n| signed_numeral(tail, n));
    }
    extract_numerals(text).last().map(|n| signed_numeral(text, n))
}

pub fn extract_nli_label(text: &str) -> Option<&'static str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)\b(entailment|neutral|contradiction)\b").expect("label pattern compiles")
    });
    re.captures(text).map(|c| match c[1].to_lowercase().as_str() {
        "entailment" => "entailment",
        "neutral" => "neutral",
        _ => "contradiction",
    })
}

pub fn extract_answer(text: &str, task: Task) -> Option<String> {
    match task {
        Task::MathNumeric => extract_math_answer(text),
        Task::NliLabel => extract_nli_label(text).map(str::to_string),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub task: Task,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Responses with no extractable answer (counted incorrect).
    pub unparseable_responses: usize,
    /// References with no extractable answer (counted incorrect).
    pub unparseable_references: usize,
}

/// Whether a single response answers its reference correctly, plus which
/// side failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Judgement {
    pub correct: bool,
    pub response_parsed: bool,
    pub reference_parsed: bool,
}

pub fn judge_answer(response: &str, reference: &str, task: Task) -> Judgement {
    let got = extract_answer(response, task);
    let want = extract_answer(reference, task);
    Judgement {
        correct: matches!((&got, &want), (Some(a), Some(b)) if a == b),
        response_parsed: got.is_some(),
        reference_parsed: want.is_some(),
    }
}

pub fn accuracy<R: AsRef<str>, S: AsRef<str>>(responses: &[R], references: &[S], task: Task) -> AccuracyReport {
    assert_eq!(responses.len(), references.len(), "responses and references must align");
    let mut report = AccuracyReport {
        task,
        n: responses.len(),
        correct: 0,
        accuracy: 0.0,
        unparseable_responses: 0,
        unparseable_references: 0,
    };
    for (r, s) in responses.iter().zip(references) {
        let j = judge_answer(r.as_ref(), s.as_ref(), task);
        report.correct += usize::from(j.correct);
        report.unparseable_responses += usize::from(!j.response_parsed);
        report.unparseable_references += usize::from(!j.reference_parsed);
    }
    if report.n > 0 {
        report.accuracy = report.correct as f64 / report.n as f64;
    }
    report
}
