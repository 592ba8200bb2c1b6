//! Metric tokenizer, version [`TOKENIZER_VERSION`].
//!
//! 1. NFKC-normalize and lowercase.
//! 2. An ASCII digit starts a numeral, scanned exactly as the guard scans
//!    it (thousands groups, decimals); the token is the normalized value,
//!    so `1,200` and `1200` are the same token. A trailing `%` is dropped.
//! 3. A run of other alphanumeric characters and combining marks is a word
//!    token. Digits end a word run (`a380` gives `a`, `380`).
//! 4. Everything else (whitespace, punctuation, symbols) separates tokens
//!    and is discarded.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::numerals::{normalize_numeral, scan_numeral};

pub const TOKENIZER_VERSION: &str = "semgate-tok-1";

fn is_word_char(c: char) -> bool {
    (c.is_alphanumeric() && !c.is_ascii_digit()) || is_combining_mark(c)
}

pub fn tokenize(text: &str) -> Vec<String> {
    let norm: String = text.nfkc().collect::<String>().to_lowercase();
    let bytes = norm.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < norm.len() {
        let c = norm[i..].chars().next().expect("in bounds");
        if c.is_ascii_digit() {
            let end = scan_numeral(bytes, i);
            tokens.push(normalize_numeral(&norm[i..end]));
            i = end;
            if bytes.get(i) == Some(&b'%') {
                i += 1;
            }
        } else if is_word_char(c) {
            let start = i;
            while let Some(c) = norm[i..].chars().next() {
                if !is_word_char(c) {
                    break;
                }
                i += c.len_utf8();
            }
            tokens.push(norm[start..i].to_string());
        } else {
            i += c.len_utf8();
        }
    }
    tokens
}
