//! BIO encoding of mention spans.

use crate::corpus::{check_non_overlapping, Span};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    O = 0,
    B = 1,
    I = 2,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::O, Tag::B, Tag::I];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Tags for a sequence of `len` tokens; spans must be in range and disjoint.
pub fn encode(spans: &[Span], len: usize) -> Result<Vec<Tag>> {
    for s in spans {
        if s.start > s.end || s.end >= len {
            return Err(Error::SpanOutOfRange {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    check_non_overlapping(spans)?;
    let mut tags = vec![Tag::O; len];
    for s in spans {
        tags[s.start] = Tag::B;
        for t in &mut tags[s.start + 1..=s.end] {
            *t = Tag::I;
        }
    }
    Ok(tags)
}

/// Spans in order of position. An `I` that does not continue a span starts one.
pub fn decode(tags: &[Tag]) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::new();
    let mut open = false;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            Tag::O => open = false,
            Tag::B => {
                out.push(Span::new(i, i));
                open = true;
            }
            Tag::I if open => out.last_mut().expect("open span").end = i,
            Tag::I => {
                out.push(Span::new(i, i));
                open = true;
            }
        }
    }
    out
}
