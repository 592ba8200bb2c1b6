//! Numeral extraction and normalization.
//!
//! Shared by the guard (numeric-payload preservation) and the metric
//! tokenizer so that `"1,200"` and `"1200"` are the same token everywhere.
//!
//! Recognized forms, scanned left to right over ASCII digits:
//!
//! * integers: `7`, `007`, `1200`
//! * thousands-grouped integers: `1,200`, `12,345,678` (groups of exactly
//!   three digits after a leading group of one to three digits)
//! * decimals: `3.5`, `1,200.75` (a `.` must be followed by a digit)
//! * an optional trailing `%`, stripped from the value and recorded
//!
//! Signs are not part of a numeral: `-5` yields `5`, and `3-5` yields `3`
//! and `5`. Digits embedded in words are still numerals (`A380` yields
//! `380`).

use std::ops::Range;

/// A numeral found in text, with its normalized value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Numeral {
    pub value: String,
    pub percent: bool,
    /// Byte range of the raw match in the source text, `%` included.
    pub span: Range<usize>,
}

/// Normalize a raw numeral string: drop thousands separators, strip
/// leading zeros from the integer part and trailing zeros from the
/// fraction. Idempotent on its own output.
pub fn normalize_numeral(raw: &str) -> String {
    let raw = raw.strip_suffix('%').unwrap_or(raw);
    let cleaned: String = raw.chars().filter(|c| *c != ',').collect();
    let (int_part, frac_part) = match cleaned.split_once('.') {
        Some((i, f)) => (i, f),
        None => (cleaned.as_str(), ""),
    };
    let int_trimmed = int_part.trim_start_matches('0');
    let int_norm = if int_trimmed.is_empty() { "0" } else { int_trimmed };
    let frac_norm = frac_part.trim_end_matches('0');
    if frac_norm.is_empty() {
        int_norm.to_string()
    } else {
        format!("{int_norm}.{frac_norm}")
    }
}

/// Scan `text` for numerals.
pub fn extract_numerals(text: &str) -> Vec<Numeral> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        let end = scan_numeral(bytes, i);
        let mut stop = end;
        let percent = bytes.get(end) == Some(&b'%');
        if percent {
            stop += 1;
        }
        out.push(Numeral {
            value: normalize_numeral(&text[start..end]),
            percent,
            span: start..stop,
        });
        i = stop;
    }
    out
}

/// Returns the end (exclusive) of the numeral starting at `start`,
/// excluding any `%`.
pub(crate) fn scan_numeral(bytes: &[u8], start: usize) -> usize {
    let digits_from = |mut j: usize| {
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        j
    };
    let mut end = digits_from(start);
    // Thousands groups only when the leading group is 1..=3 digits.
    if end - start <= 3 {
        loop {
            let group_ok = bytes.get(end) == Some(&b',')
                && end + 4 <= bytes.len()
                && bytes[end + 1..end + 4].iter().all(u8::is_ascii_digit)
                && !bytes.get(end + 4).is_some_and(u8::is_ascii_digit);
            if !group_ok {
                break;
            }
            end += 4;
        }
    }
    if bytes.get(end) == Some(&b'.') && bytes.get(end + 1).is_some_and(u8::is_ascii_digit) {
        end = digits_from(end + 1);
    }
    end
}

/// English number words recognized when the optional word table is on.
const NUMBER_WORDS: &[(&str, &str)] = &[
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
    ("eleven", "11"),
    ("twelve", "12"),
    ("thirteen", "13"),
    ("fourteen", "14"),
    ("fifteen", "15"),
    ("sixteen", "16"),
    ("seventeen", "17"),
    ("eighteen", "18"),
    ("nineteen", "19"),
    ("twenty", "20"),
    ("thirty", "30"),
    ("forty", "40"),
    ("fifty", "50"),
    ("sixty", "60"),
    ("seventy", "70"),
    ("eighty", "80"),
    ("ninety", "90"),
    ("hundred", "100"),
    ("thousand", "1000"),
];

/// Look up a single English number word (case-insensitive).
pub fn number_word_value(word: &str) -> Option<&'static str> {
    let lower = word.to_lowercase();
    NUMBER_WORDS
        .iter()
        .find(|(w, _)| *w == lower)
        .map(|(_, v)| *v)
}
