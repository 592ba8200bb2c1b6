//! Checks on transformed text before it may leave the machine.
//!
//! Two checks:
//!
//! * **Numbers.** The multiset of normalized numerals in the transformed
//!   text must contain every numeral of the original. Numerals only in the
//!   transform are reported as extra; they fail the check only in strict
//!   mode.
//! * **Lexicon.** No lexicon term may appear in the transformed text
//!   (case-insensitive, whole words). Terms come from a file, and
//!   optionally from the capitalized multi-word spans of the original
//!   (names such as `Maple Clinic`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerals::{extract_numerals, number_word_value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconHit {
    pub term: String,
    /// Character offset of the match in the checked text.
    pub position: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardReport {
    pub passed: bool,
    pub missing_numbers: Vec<String>,
    pub extra_numbers: Vec<String>,
    pub lexicon_hits: Vec<LexiconHit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl GuardReport {
    fn recompute(&mut self, strict_extra: bool) {
        self.passed = self.missing_numbers.is_empty()
            && self.lexicon_hits.is_empty()
            && (!strict_extra || self.extra_numbers.is_empty());
    }

    /// Combine two reports over the same text.
    pub fn merge(mut self, other: GuardReport, strict_extra: bool) -> GuardReport {
        self.missing_numbers.extend(other.missing_numbers);
        self.missing_numbers.sort();
        self.extra_numbers.extend(other.extra_numbers);
        self.extra_numbers.sort();
        self.lexicon_hits.extend(other.lexicon_hits);
        self.warnings.extend(other.warnings);
        self.recompute(strict_extra);
        self
    }

    /// One-line human explanation of a failure.
    pub fn explain(&self) -> String {
        let mut parts = Vec::new();
        if !self.missing_numbers.is_empty() {
            parts.push(format!("numbers dropped: {}", self.missing_numbers.join(", ")));
        }
        if !self.extra_numbers.is_empty() {
            parts.push(format!("numbers introduced: {}", self.extra_numbers.join(", ")));
        }
        if !self.lexicon_hits.is_empty() {
            let terms: Vec<&str> = self.lexicon_hits.iter().map(|h| h.term.as_str()).collect();
            parts.push(format!("protected terms present: {}", terms.join(", ")));
        }
        if parts.is_empty() {
            "passed".into()
        } else {
            parts.join("; ")
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NumberCheckOptions {
    /// Extra numerals fail the check instead of warning.
    pub strict_extra: bool,
    /// Count English number words ("seven") as numerals.
    pub number_words: bool,
}

fn numeral_values(text: &str, number_words: bool) -> Vec<String> {
    let mut v: Vec<String> = extract_numerals(text).into_iter().map(|n| n.value).collect();
    if number_words {
        for w in text.split(|c: char| !c.is_alphabetic()) {
            if let Some(val) = number_word_value(w) {
                v.push(val.to_string());
            }
        }
    }
    v
}

/// `a − b` as multisets, sorted.
fn multiset_diff(a: &[String], b: &[String]) -> Vec<String> {
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for x in a {
        *counts.entry(x).or_default() += 1;
    }
    for x in b {
        *counts.entry(x).or_default() -= 1;
    }
    let mut out = Vec::new();
    for (k, c) in counts {
        for _ in 0..c.max(0) {
            out.push(k.to_string());
        }
    }
    out
}

pub fn check_numbers(t_o: &str, t_hat_o: &str) -> GuardReport {
    check_numbers_with(t_o, t_hat_o, NumberCheckOptions::default())
}

pub fn check_numbers_with(t_o: &str, t_hat_o: &str, opts: NumberCheckOptions) -> GuardReport {
    let src = numeral_values(t_o, opts.number_words);
    let dst = numeral_values(t_hat_o, opts.number_words);
    let mut report = GuardReport {
        missing_numbers: multiset_diff(&src, &dst),
        extra_numbers: multiset_diff(&dst, &src),
        ..Default::default()
    };
    if !report.extra_numbers.is_empty() && !opts.strict_extra {
        report
            .warnings
            .push(format!("transform introduced numbers: {}", report.extra_numbers.join(", ")));
    }
    report.recompute(opts.strict_extra);
    report
}

/// Terms that must not appear in transformed text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    terms: Vec<String>,
}

impl Lexicon {
    pub fn new(terms: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut l = Lexicon::default();
        for t in terms {
            l.add(t);
        }
        l
    }

    /// One term per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn add(&mut self, term: impl Into<String>) {
        let term = term.into().trim().to_string();
        if !term.is_empty() && !self.terms.iter().any(|t| t.to_lowercase() == term.to_lowercase()) {
            self.terms.push(term);
        }
    }

    pub fn extend(&mut self, other: &Lexicon) {
        for t in &other.terms {
            self.add(t.clone());
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Case-insensitive whole-word scan for every lexicon term.
pub fn check_lexicon(t_hat_o: &str, lexicon: &Lexicon) -> GuardReport {
    let hay: Vec<char> = t_hat_o.chars().flat_map(char::to_lowercase).collect();
    let aligned = hay.len() == t_hat_o.chars().count();
    let mut hits = Vec::new();
    for term in lexicon.terms() {
        let needle: Vec<char> = term.chars().flat_map(char::to_lowercase).collect();
        if needle.is_empty() || needle.len() > hay.len() {
            continue;
        }
        for start in 0..=hay.len() - needle.len() {
            let end = start + needle.len();
            if hay[start..end] != needle[..] {
                continue;
            }
            let left_ok = start == 0 || !is_word_char(hay[start - 1]) || !is_word_char(needle[0]);
            let right_ok =
                end == hay.len() || !is_word_char(hay[end]) || !is_word_char(needle[needle.len() - 1]);
            if left_ok && right_ok {
                hits.push(LexiconHit {
                    term: term.clone(),
                    position: start,
                });
            }
        }
    }
    hits.sort_by_key(|h| h.position);
    let mut report = GuardReport {
        lexicon_hits: hits,
        ..Default::default()
    };
    if !aligned {
        report
            .warnings
            .push("case folding changed text length; hit positions are approximate".into());
    }
    report.recompute(false);
    report
}

/// Capitalized multi-word spans of `t_o`, e.g. `Maple Clinic` or
/// `Nurse Chen`. Sentence-initial single words are not included.
pub fn derive_lexicon(t_o: &str) -> Lexicon {
    let mut lex = Lexicon::default();
    let mut run: Vec<&str> = Vec::new();
    let flush = |run: &mut Vec<&str>, lex: &mut Lexicon| {
        if run.len() >= 2 {
            lex.add(run.join(" "));
        }
        run.clear();
    };
    for raw in t_o.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let capitalized = word.chars().next().is_some_and(char::is_uppercase)
            && word.chars().all(|c| c.is_alphabetic() || c == '\'' || c == '-');
        if capitalized {
            run.push(word);
        } else {
            flush(&mut run, &mut lex);
        }
        // Punctuation after a word ends the span.
        if capitalized && raw.ends_with(|c: char| !c.is_alphanumeric()) {
            flush(&mut run, &mut lex);
        }
    }
    flush(&mut run, &mut lex);
    lex
}

/// Full check of a transform: numbers plus lexicon.
#[derive(Debug, Clone, Default)]
pub struct Guard {
    pub lexicon: Lexicon,
    pub derive_from_input: bool,
    pub numbers: NumberCheckOptions,
}

impl Guard {
    pub fn check(&self, t_o: &str, t_hat_o: &str) -> GuardReport {
        let mut lexicon = self.lexicon.clone();
        if self.derive_from_input {
            lexicon.extend(&derive_lexicon(t_o));
        }
        check_numbers_with(t_o, t_hat_o, self.numbers)
            .merge(check_lexicon(t_hat_o, &lexicon), self.numbers.strict_extra)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_multisets_pass() {
        let r = check_numbers("sold 3 of 12 items", "shipped 3 of 12 crates");
        assert!(r.passed);
        assert!(r.missing_numbers.is_empty());
    }

    #[test]
    fn dropped_numeral_fails() {
        let r = check_numbers("sold 3 items", "shipped some crates");
        assert!(!r.passed);
        assert_eq!(r.missing_numbers, ["3"]);
    }

    #[test]
    fn normalization_fixtures() {
        assert!(check_numbers("rate 3.5% over 1,200 units", "level 3.5 across 1200 cells").passed);
        assert!(check_numbers("0.50 of 007", "0.5 of 7").passed);
        let r = check_numbers("3 and 3", "3");
        assert_eq!(r.missing_numbers, ["3"]);
    }

    #[test]
    fn extras_warn_unless_strict() {
        let r = check_numbers("3 beds", "3 pallets in 2 rows");
        assert!(r.passed);
        assert_eq!(r.extra_numbers, ["2"]);
        assert_eq!(r.warnings.len(), 1);
        let strict = NumberCheckOptions {
            strict_extra: true,
            ..Default::default()
        };
        assert!(!check_numbers_with("3 beds", "3 pallets in 2 rows", strict).passed);
    }

    #[test]
    fn number_words_are_optional() {
        assert!(check_numbers("seven beds", "pallets").passed);
        let words = NumberCheckOptions {
            number_words: true,
            ..Default::default()
        };
        assert!(check_numbers_with("seven beds", "7 pallets", words).passed);
        assert!(!check_numbers_with("seven beds", "pallets", words).passed);
    }

    #[test]
    fn lexicon_hits() {
        let lex = Lexicon::new(["Acme Corp"]);
        let r = check_lexicon("Shipment for ACME corp arrived", &lex);
        assert!(!r.passed);
        assert_eq!(r.lexicon_hits, [LexiconHit { term: "Acme Corp".into(), position: 13 }]);
        assert!(check_lexicon("Acme Corporation", &lex).passed);
        assert!(check_lexicon("anything at all", &Lexicon::default()).passed);
    }

    #[test]
    fn lexicon_file_format() {
        let lex = Lexicon::parse("# names\nAcme Corp\n\n  Jane Doe  \nacme corp\n");
        assert_eq!(lex.terms(), ["Acme Corp", "Jane Doe"]);
    }

    #[test]
    fn derived_spans() {
        let lex = derive_lexicon("Nurse Chen at Maple Clinic treats 4 patients. Then she rests.");
        assert_eq!(lex.terms(), ["Nurse Chen", "Maple Clinic"]);
    }

    proptest! {
        #[test]
        fn swapping_arguments_swaps_missing_and_extra(
            a in proptest::collection::vec("[0-9]{1,3}|word", 0..12),
            b in proptest::collection::vec("[0-9]{1,3}|word", 0..12),
        ) {
            let (x, y) = (a.join(" "), b.join(" "));
            let fwd = check_numbers(&x, &y);
            let back = check_numbers(&y, &x);
            prop_assert_eq!(fwd.missing_numbers, back.extra_numbers);
            prop_assert_eq!(fwd.extra_numbers, back.missing_numbers);
        }
    }
}
