//! Deterministic in-process model backends.
//!
//! Each rule set is a pure function of the last user message:
//!
//! * `echo` returns it unchanged.
//! * `arith_solver` recognizes the templated word problems of
//!   [`crate::corpus`] by their structure words and answers `#### <n>`.
//! * `context_swap` replaces every word of the clinic vocabulary with its
//!   logistics counterpart (and vice versa). Numerals and all other words
//!   are untouched.
//! * `context_unswap` applies the inverse table. When the message is a
//!   composed decoder input it restores only the `RESPONSE` field, which
//!   makes it a stand-in for a trained decoder.
//!
//! The swap table is an involution (`swap(swap(x)) == x`), so the inverse
//! table is the table itself and the round trip is exact for any text.

use std::collections::HashMap;
use std::sync::OnceLock;

use async_trait::async_trait;
use regex::Regex;
use thiserror::Error;

use super::wire::{WireChatRequest, WireChatResponse, WireUsage};
use super::{AttemptError, Transport};
use crate::compose::parse_decoder_input;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown mock rule set `{0}` (expected echo, arith_solver, context_swap or context_unswap)")]
pub struct UnknownRuleSet(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleSet {
    Echo,
    ArithSolver,
    ContextSwap,
    ContextUnswap,
}

impl RuleSet {
    pub fn from_name(name: &str) -> Result<Self, UnknownRuleSet> {
        match name {
            "echo" => Ok(RuleSet::Echo),
            "arith_solver" => Ok(RuleSet::ArithSolver),
            "context_swap" => Ok(RuleSet::ContextSwap),
            "context_unswap" => Ok(RuleSet::ContextUnswap),
            other => Err(UnknownRuleSet(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleSet::Echo => "echo",
            RuleSet::ArithSolver => "arith_solver",
            RuleSet::ContextSwap => "context_swap",
            RuleSet::ContextUnswap => "context_unswap",
        }
    }

    pub fn apply(self, input: &str) -> String {
        match self {
            RuleSet::Echo => input.to_string(),
            RuleSet::ArithSolver => solve(input),
            RuleSet::ContextSwap => swap_vocabulary(input),
            RuleSet::ContextUnswap => match parse_decoder_input(input) {
                Some(parts) => unswap_vocabulary(&parts.t_hat_r),
                None => unswap_vocabulary(input),
            },
        }
    }
}

/// Resolve a rule set by name.
pub fn mock_rules(name: &str) -> Result<RuleSet, UnknownRuleSet> {
    RuleSet::from_name(name)
}

/// Clinic-domain word and its logistics-domain counterpart.
pub const SWAP_TABLE: &[(&str, &str)] = &[
    ("nurse", "driver"),
    ("doctor", "captain"),
    ("pharmacist", "dispatcher"),
    ("surgeon", "pilot"),
    ("rivera", "okafor"),
    ("chen", "larsen"),
    ("patel", "moreau"),
    ("garcia", "novak"),
    ("kowalski", "tanaka"),
    ("maple", "granite"),
    ("willow", "harbor"),
    ("cedar", "summit"),
    ("birch", "delta"),
    ("clinic", "depot"),
    ("hospital", "warehouse"),
    ("pharmacy", "terminal"),
    ("infirmary", "dock"),
    ("patients", "crates"),
    ("patient", "crate"),
    ("beds", "pallets"),
    ("bed", "pallet"),
    ("doses", "parcels"),
    ("dose", "parcel"),
    ("vials", "barrels"),
    ("vial", "barrel"),
    ("bandages", "cartons"),
    ("bandage", "carton"),
    ("syringes", "boxes"),
    ("syringe", "box"),
    ("wards", "bays"),
    ("ward", "bay"),
    ("rooms", "trucks"),
    ("room", "truck"),
    ("cabinets", "containers"),
    ("cabinet", "container"),
    ("trays", "bins"),
    ("tray", "bin"),
    ("treats", "loads"),
    ("stocks", "ships"),
    ("prepares", "packs"),
    ("orders", "hauls"),
    ("receives", "unloads"),
    ("manage", "track"),
    ("handle", "move"),
    ("expire", "break"),
    ("medical", "freight"),
    ("health", "transit"),
    ("care", "cargo"),
];

fn swap_map() -> &'static HashMap<&'static str, &'static str> {
    static MAP: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut m = HashMap::new();
        for (a, b) in SWAP_TABLE {
            m.insert(*a, *b);
            m.insert(*b, *a);
        }
        m
    })
}

/// The clinic-side words of the swap table.
pub fn clinic_vocabulary() -> impl Iterator<Item = &'static str> {
    SWAP_TABLE.iter().map(|(a, _)| *a)
}

/// The logistics-side words of the swap table.
pub fn logistics_vocabulary() -> impl Iterator<Item = &'static str> {
    SWAP_TABLE.iter().map(|(_, b)| *b)
}

enum CaseShape {
    Lower,
    Title,
    Upper,
}

fn case_shape(word: &str) -> Option<CaseShape> {
    let mut chars = word.chars();
    let first = chars.next()?;
    let rest: Vec<char> = chars.collect();
    if word.chars().all(|c| c.is_lowercase()) {
        Some(CaseShape::Lower)
    } else if first.is_uppercase() && rest.iter().all(|c| c.is_lowercase()) {
        Some(CaseShape::Title)
    } else if word.chars().count() > 1 && word.chars().all(|c| c.is_uppercase()) {
        Some(CaseShape::Upper)
    } else {
        None
    }
}

fn apply_shape(word: &str, shape: CaseShape) -> String {
    match shape {
        CaseShape::Lower => word.to_string(),
        CaseShape::Upper => word.to_uppercase(),
        CaseShape::Title => {
            let mut c = word.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        }
    }
}

fn map_words(text: &str, lookup: impl Fn(&str) -> Option<&'static str>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if word.is_empty() {
            return;
        }
        let replaced = case_shape(word).and_then(|shape| {
            lookup(&word.to_lowercase()).map(|w| apply_shape(w, shape))
        });
        out.push_str(replaced.as_deref().unwrap_or(word));
        word.clear();
    };
    for c in text.chars() {
        if c.is_alphabetic() {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

pub fn swap_vocabulary(text: &str) -> String {
    map_words(text, |w| swap_map().get(w).copied())
}

pub fn unswap_vocabulary(text: &str) -> String {
    // The table is an involution.
    swap_vocabulary(text)
}

struct Pattern {
    re: Regex,
    op: fn(i64, i64) -> Option<f64>,
}

fn patterns() -> &'static [Pattern] {
    static P: OnceLock<Vec<Pattern>> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("solver pattern compiles");
        vec![
            Pattern {
                re: re(r"(?i)(\d+)\s+[[:alpha:]]+\s+with\s+(\d+)\s+[[:alpha:]]+\s+each"),
                op: |a, b| Some((a * b) as f64),
            },
            Pattern {
                re: re(r"(?i)(\d+)\s+[[:alpha:]]+\s+(?:split|shared|divided)\s+equally\s+(?:into|among)\s+(\d+)"),
                op: |a, b| (b != 0).then(|| a as f64 / b as f64),
            },
            Pattern {
                re: re(r"(?i)(\d+)\s+[[:alpha:]]+\s+but\s+(\d+)\s+of\s+them"),
                op: |a, b| Some((a - b) as f64),
            },
            Pattern {
                re: re(r"(?i)(\d+)\s+[[:alpha:]]+\b.*?\b(\d+)\s+more\b"),
                op: |a, b| Some((a + b) as f64),
            },
        ]
    })
}

fn format_answer(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Answer a templated word problem, or say it cannot.
pub fn solve(problem: &str) -> String {
    for p in patterns() {
        if let Some(caps) = p.re.captures(problem) {
            let a: Option<i64> = caps[1].parse().ok();
            let b: Option<i64> = caps[2].parse().ok();
            if let Some(v) = a.zip(b).and_then(|(a, b)| (p.op)(a, b)) {
                return format!("#### {}", format_answer(v));
            }
        }
    }
    "I could not solve this problem.".to_string()
}

/// Transport that answers with a rule set, never touching the network.
#[derive(Debug, Clone)]
pub struct MockTransport {
    rules: RuleSet,
}

impl MockTransport {
    pub fn new(rules: RuleSet) -> Self {
        Self { rules }
    }
}

fn rough_tokens(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

#[async_trait]
impl Transport for MockTransport {
    async fn send(&self, body: &WireChatRequest) -> Result<WireChatResponse, AttemptError> {
        let input = body
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let content = self.rules.apply(input);
        let prompt_tokens: u64 = body.messages.iter().map(|m| rough_tokens(&m.content)).sum();
        let completion_tokens = rough_tokens(&content);
        Ok(WireChatResponse::single(
            format!("mock-{}", self.rules.name()),
            body.model.clone(),
            content,
            WireUsage {
                prompt_tokens,
                completion_tokens,
                total_tokens: prompt_tokens + completion_tokens,
            },
        ))
    }

    fn describe(&self) -> String {
        format!("mock:{}", self.rules.name())
    }
}
