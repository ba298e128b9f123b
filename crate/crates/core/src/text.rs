//! Unicode normalization and the whitespace/punctuation tokenizer.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// NFKC + lowercase, repeated until stable so the result is a fixed point.
pub fn fold_case(s: &str) -> String {
    let mut cur: String = s.nfkc().collect::<String>().to_lowercase();
    for _ in 0..4 {
        let next: String = cur.nfkc().collect::<String>().to_lowercase();
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// NFKC, lowercase, whitespace collapsed to single spaces and trimmed.
pub fn normalize_alias(s: &str) -> String {
    let mut cur = s.to_string();
    // Each pass is idempotent on its own except for rare NFKC/lowercase
    // interactions, which the loop absorbs.
    for _ in 0..4 {
        let folded = fold_case(&cur);
        let next = folded.split_whitespace().collect::<Vec<_>>().join(" ");
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Space,
    Punct,
    Word,
}

fn classify(c: char) -> Class {
    if c.is_whitespace() {
        Class::Space
    } else if c.is_alphanumeric() || is_combining_mark(c) {
        Class::Word
    } else {
        Class::Punct
    }
}

/// A token as a half-open range of unicode character indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawToken {
    pub start: usize,
    pub end: usize,
}

/// Splits on whitespace; every non-alphanumeric, non-space character is its own token.
pub fn split(text: &str) -> Vec<RawToken> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        match classify(c) {
            Class::Word => {
                if word_start.is_none() {
                    word_start = Some(i);
                }
            }
            class => {
                if let Some(s) = word_start.take() {
                    out.push(RawToken { start: s, end: i });
                }
                if class == Class::Punct {
                    out.push(RawToken { start: i, end: i + 1 });
                }
            }
        }
    }
    if let Some(s) = word_start {
        out.push(RawToken { start: s, end: n });
    }
    out
}

/// Maps unicode character indices to byte offsets; entry `n` is `text.len()`.
pub fn char_to_byte(text: &str) -> Vec<usize> {
    let mut v: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    v.push(text.len());
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_alias("  New   York "), "new york");
        assert_eq!(normalize_alias("Ｎｙｃ"), "nyc");
        assert_eq!(normalize_alias(""), "");
    }

    #[test]
    fn split_punctuation_and_spaces() {
        let toks = split("U.S. army, hi");
        let s: Vec<(usize, usize)> = toks.iter().map(|t| (t.start, t.end)).collect();
        assert_eq!(s, vec![(0, 1), (1, 2), (2, 3), (3, 4), (5, 9), (9, 10), (11, 13)]);
        assert!(split("   ").is_empty());
    }

    #[test]
    fn combining_marks_stay_in_word() {
        let toks = split("cafe\u{301} x");
        assert_eq!(toks[0], RawToken { start: 0, end: 5 });
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,24}") {
            let once = normalize_alias(&s);
            prop_assert_eq!(normalize_alias(&once), once.clone());
        }

        #[test]
        fn split_covers_non_space(s in "\\PC{0,40}") {
            let toks = split(&s);
            let chars: Vec<char> = s.chars().collect();
            let mut covered = vec![false; chars.len()];
            let mut last_end = 0;
            for t in &toks {
                prop_assert!(t.start >= last_end && t.start < t.end);
                last_end = t.end;
                for c in covered.iter_mut().take(t.end).skip(t.start) { *c = true; }
            }
            for (c, cov) in chars.iter().zip(&covered) {
                prop_assert_eq!(!c.is_whitespace(), *cov);
            }
        }
    }
}
