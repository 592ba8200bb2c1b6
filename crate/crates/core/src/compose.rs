//! Decoder input composition.
//!
//! The decoder is conditioned on the original input, the transformed input
//! and the cloud response. All three are serialized into one text with
//! labeled delimiter lines:
//!
//! ```text
//! ORIGINAL:
//! <t_o>
//! TRANSFORMED:
//! <t_hat_o>
//! RESPONSE:
//! <t_hat_r>
//! ```
//!
//! A field line that already looks like a delimiter (optionally preceded by
//! backslashes, e.g. `RESPONSE:` or `\RESPONSE:`) gets one extra leading
//! backslash, which [`parse_decoder_input`] removes again. Composition is
//! therefore exactly invertible for any three strings.
//!
//! Training files and the live gateway use the same function, so the
//! decoder sees identical inputs in both places.

const ORIGINAL: &str = "ORIGINAL:";
const TRANSFORMED: &str = "TRANSFORMED:";
const RESPONSE: &str = "RESPONSE:";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderInput {
    pub t_o: String,
    pub t_hat_o: String,
    pub t_hat_r: String,
}

fn is_delimiter_like(line: &str) -> bool {
    let rest = line.trim_start_matches('\\');
    rest == ORIGINAL || rest == TRANSFORMED || rest == RESPONSE
}

fn escape(field: &str) -> String {
    field
        .split('\n')
        .map(|l| {
            if is_delimiter_like(l) {
                format!("\\{l}")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn unescape(lines: &[&str]) -> String {
    lines
        .iter()
        .map(|l| {
            if l.starts_with('\\') && is_delimiter_like(l) {
                &l[1..]
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn compose_decoder_input(t_o: &str, t_hat_o: &str, t_hat_r: &str) -> String {
    format!(
        "{ORIGINAL}\n{}\n{TRANSFORMED}\n{}\n{RESPONSE}\n{}",
        escape(t_o),
        escape(t_hat_o),
        escape(t_hat_r)
    )
}

/// Split a composed decoder input back into its three fields.
pub fn parse_decoder_input(text: &str) -> Option<DecoderInput> {
    let lines: Vec<&str> = text.split('\n').collect();
    if lines.first() != Some(&ORIGINAL) {
        return None;
    }
    let t_pos = lines.iter().position(|l| *l == TRANSFORMED)?;
    let r_pos = t_pos + 1 + lines[t_pos + 1..].iter().position(|l| *l == RESPONSE)?;
    if t_pos < 2 || r_pos < t_pos + 2 || r_pos + 1 >= lines.len() {
        return None;
    }
    Some(DecoderInput {
        t_o: unescape(&lines[1..t_pos]),
        t_hat_o: unescape(&lines[t_pos + 1..r_pos]),
        t_hat_r: unescape(&lines[r_pos + 1..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_stable() {
        assert_eq!(
            compose_decoder_input("a", "b", "c"),
            "ORIGINAL:\na\nTRANSFORMED:\nb\nRESPONSE:\nc"
        );
    }

    #[test]
    fn delimiter_lines_in_fields_survive() {
        let tricky = "x\nRESPONSE:\n\\TRANSFORMED:\ny";
        let composed = compose_decoder_input(tricky, "ORIGINAL:", "");
        let back = parse_decoder_input(&composed).unwrap();
        assert_eq!(back.t_o, tricky);
        assert_eq!(back.t_hat_o, "ORIGINAL:");
        assert_eq!(back.t_hat_r, "");
    }

    #[test]
    fn rejects_foreign_text() {
        assert!(parse_decoder_input("hello").is_none());
        assert!(parse_decoder_input("ORIGINAL:\na\nRESPONSE:\nc").is_none());
    }

    proptest! {
        #[test]
        fn round_trip(
            a in "(\\PC|\n|ORIGINAL:|RESPONSE:|TRANSFORMED:|\\\\){0,20}",
            b in "(\\PC|\n|ORIGINAL:|RESPONSE:|TRANSFORMED:|\\\\){0,20}",
            c in "(\\PC|\n|ORIGINAL:|RESPONSE:|TRANSFORMED:|\\\\){0,20}",
        ) {
            let composed = compose_decoder_input(&a, &b, &c);
            let back = parse_decoder_input(&composed).unwrap();
            prop_assert_eq!(back, DecoderInput { t_o: a, t_hat_o: b, t_hat_r: c });
        }
    }
}
