//! Documents, tokenized contexts and the conversions between them.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, char_to_byte};
use crate::vocab::{EntityVocab, TokenVocab};

/// Mention over unicode character indices, `[start_char, end_char)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharMention {
    pub start_char: usize,
    pub end_char: usize,
    /// `None` marks a mention without a linking label.
    pub entity: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub mentions: Vec<CharMention>,
}

impl Document {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Checks bounds, `start < end`, and that mentions do not overlap.
    pub fn validate(&self) -> Result<()> {
        let n = self.char_len();
        let bad = |message: String| Error::InvalidDocument {
            doc_id: self.doc_id.clone(),
            message,
        };
        let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(self.mentions.len());
        for m in &self.mentions {
            if m.start_char >= m.end_char || m.end_char > n {
                return Err(bad(format!(
                    "mention [{}, {}) invalid for text of {n} characters",
                    m.start_char, m.end_char
                )));
            }
            ranges.push((m.start_char, m.end_char));
        }
        ranges.sort_unstable();
        for w in ranges.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(bad(format!(
                    "mentions [{}, {}) and [{}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }

    /// Text of `[start, end)` in character indices.
    pub fn slice_chars(&self, start: usize, end: usize) -> String {
        self.text.chars().skip(start).take(end.saturating_sub(start)).collect()
    }

    /// Non-blank newline-delimited lines as character ranges.
    pub fn sentences(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut blank = true;
        let mut n = 0;
        for (i, c) in self.text.chars().enumerate() {
            n = i + 1;
            if c == '\n' {
                if !blank {
                    out.push((start, i));
                }
                start = i + 1;
                blank = true;
            } else if !c.is_whitespace() {
                blank = false;
            }
        }
        if !blank {
            out.push((start, n));
        }
        out
    }
}

/// Inclusive token span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionLabel {
    pub span: Span,
    pub entity: Option<usize>,
    /// Original surface text, used for phrase-table and alias lookups.
    #[serde(default)]
    pub surface: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub doc_id: String,
    pub tokens: Vec<usize>,
    /// Per-token `[start, end)` character offsets into the document text.
    /// Title and separator tokens of a prepended prefix carry `(0, 0)`.
    pub char_offsets: Vec<(usize, usize)>,
    pub labels: Vec<MentionLabel>,
    /// Number of leading tokens that were prepended as extra context.
    #[serde(default)]
    pub prefix_len: usize,
    /// Character range of the document this context was cut from.
    #[serde(default)]
    pub source_range: (usize, usize),
}

impl Context {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Character range covered by a token span.
    pub fn char_range(&self, span: Span) -> (usize, usize) {
        (self.char_offsets[span.start].0, self.char_offsets[span.end].1)
    }

    pub fn check(&self) -> Result<()> {
        let t = self.tokens.len();
        let mut spans: Vec<Span> = Vec::with_capacity(self.labels.len());
        for l in &self.labels {
            if l.span.start > l.span.end || l.span.end >= t {
                return Err(Error::SpanOutOfRange {
                    start: l.span.start,
                    end: l.span.end,
                    len: t,
                });
            }
            spans.push(l.span);
        }
        check_non_overlapping(&spans)
    }
}

pub(crate) fn check_non_overlapping(spans: &[Span]) -> Result<()> {
    let mut sorted = spans.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(Error::OverlappingSpans(w[0].start, w[0].end, w[1].start, w[1].end));
        }
    }
    Ok(())
}

/// Why mentions were not turned into labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub straddling: usize,
    pub truncated: usize,
    pub whitespace: usize,
    pub overlapping: usize,
    pub unknown_entity: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.straddling + self.truncated + self.whitespace + self.overlapping + self.unknown_entity
    }

    pub fn add(&mut self, o: &DropCounts) {
        self.straddling += o.straddling;
        self.truncated += o.truncated;
        self.whitespace += o.whitespace;
        self.overlapping += o.overlapping;
        self.unknown_entity += o.unknown_entity;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tokenized {
    pub ids: Vec<usize>,
    pub offsets: Vec<(usize, usize)>,
}

/// Tokenizes `text`; offsets are character indices into `text`.
pub fn tokenize(text: &str, vocab: &TokenVocab) -> Tokenized {
    let c2b = char_to_byte(text);
    let raw = text::split(text);
    let mut out = Tokenized {
        ids: Vec::with_capacity(raw.len()),
        offsets: Vec::with_capacity(raw.len()),
    };
    for t in raw {
        let piece = &text[c2b[t.start]..c2b[t.end]];
        out.ids.push(vocab.id(&text::fold_case(piece)));
        out.offsets.push((t.start, t.end));
    }
    out
}

/// Normalized token strings of `text`, for vocabulary building.
pub fn token_strings(text: &str) -> Vec<String> {
    let c2b = char_to_byte(text);
    text::split(text)
        .into_iter()
        .map(|t| text::fold_case(&text[c2b[t.start]..c2b[t.end]]))
        .collect()
}

/// Smallest token span covering `[start, end)`, or `None` if no token intersects it.
pub fn align_span(start: usize, end: usize, offsets: &[(usize, usize)]) -> Option<Span> {
    let first = offsets.partition_point(|&(_, e)| e <= start);
    if first >= offsets.len() || offsets[first].0 >= end {
        return None;
    }
    let last = offsets.partition_point(|&(s, _)| s < end) - 1;
    Some(Span::new(first, last))
}

/// Aligns character mentions to labels. Mentions that land in whitespace,
/// past `max_tokens`, or on tokens already claimed are dropped and counted.
pub fn align_spans(
    mentions: &[&CharMention],
    offsets: &[(usize, usize)],
    max_tokens: usize,
    doc: &Document,
    entities: &EntityVocab,
) -> (Vec<MentionLabel>, DropCounts) {
    let mut drops = DropCounts::default();
    let mut order: Vec<&CharMention> = mentions.to_vec();
    order.sort_by_key(|m| (m.start_char, m.end_char));
    let mut labels: Vec<MentionLabel> = Vec::with_capacity(order.len());
    for m in order {
        let Some(span) = align_span(m.start_char, m.end_char, offsets) else {
            drops.whitespace += 1;
            continue;
        };
        if span.end >= max_tokens {
            drops.truncated += 1;
            continue;
        }
        if labels.last().is_some_and(|l| l.span.overlaps(&span)) {
            drops.overlapping += 1;
            continue;
        }
        let entity = match &m.entity {
            None => None,
            Some(id) => match entities.get(id) {
                Some(e) => Some(e),
                None => {
                    drops.unknown_entity += 1;
                    continue;
                }
            },
        };
        labels.push(MentionLabel {
            span,
            entity,
            surface: doc.slice_chars(m.start_char, m.end_char),
        });
    }
    (labels, drops)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub chunk_chars: usize,
    pub max_len: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            chunk_chars: 1000,
            max_len: 256,
        }
    }
}

/// Character ranges partitioning `[0, n_chars)` into chunks.
pub fn chunk_ranges(n_chars: usize, chunk_chars: usize) -> Vec<(usize, usize)> {
    (0..n_chars)
        .step_by(chunk_chars.max(1))
        .map(|s| (s, (s + chunk_chars).min(n_chars)))
        .collect()
}

fn tokenize_range(
    doc: &Document,
    c2b: &[usize],
    range: (usize, usize),
    vocab: &TokenVocab,
) -> Tokenized {
    let mut t = tokenize(&doc.text[c2b[range.0]..c2b[range.1]], vocab);
    for o in &mut t.offsets {
        o.0 += range.0;
        o.1 += range.0;
    }
    t
}

/// Splits a document into chunk contexts; mentions go to the chunk holding
/// their start and are dropped if they cross its end.
pub fn chunk_document(
    doc: &Document,
    cfg: &ChunkConfig,
    tokens: &TokenVocab,
    entities: &EntityVocab,
) -> Result<(Vec<Context>, DropCounts)> {
    if cfg.chunk_chars == 0 {
        return Err(Error::Config("chunk_chars must be positive".into()));
    }
    let c2b = char_to_byte(&doc.text);
    let n = c2b.len() - 1;
    let mut drops = DropCounts::default();
    let mut out = Vec::new();
    for (a, b) in chunk_ranges(n, cfg.chunk_chars) {
        let mut tok = tokenize_range(doc, &c2b, (a, b), tokens);
        let mut inside = Vec::new();
        for m in doc.mentions.iter().filter(|m| m.start_char >= a && m.start_char < b) {
            if m.end_char > b {
                drops.straddling += 1;
            } else {
                inside.push(m);
            }
        }
        let (labels, d) = align_spans(&inside, &tok.offsets, cfg.max_len, doc, entities);
        drops.add(&d);
        tok.ids.truncate(cfg.max_len);
        tok.offsets.truncate(cfg.max_len);
        out.push(Context {
            doc_id: doc.doc_id.clone(),
            tokens: tok.ids,
            char_offsets: tok.offsets,
            labels,
            prefix_len: 0,
            source_range: (a, b),
        });
    }
    Ok((out, drops))
}

/// Extra document context prepended to an evaluation sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// The sentence alone.
    #[serde(rename = "none")]
    SentenceOnly,
    Title,
    #[default]
    TitleLead2,
}

impl FromStr for ContextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::SentenceOnly),
            "title" => Ok(Self::Title),
            "title_lead2" => Ok(Self::TitleLead2),
            _ => Err(Error::Config(format!(
                "unknown context mode {s:?} (expected none, title or title_lead2)"
            ))),
        }
    }
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SentenceOnly => "none",
            Self::Title => "title",
            Self::TitleLead2 => "title_lead2",
        })
    }
}

/// Builds the context for sentence `sentence` (an index into [`Document::sentences`]).
pub fn make_eval_context(
    doc: &Document,
    sentence: usize,
    mode: ContextMode,
    max_len: usize,
    tokens: &TokenVocab,
    entities: &EntityVocab,
) -> Result<(Context, DropCounts)> {
    let sentences = doc.sentences();
    let &(a, b) = sentences.get(sentence).ok_or(Error::IndexOutOfRange {
        what: "sentences",
        index: sentence,
        size: sentences.len(),
    })?;
    let c2b = char_to_byte(&doc.text);

    let mut prefix = Tokenized::default();
    if mode != ContextMode::SentenceOnly {
        let title = tokenize(&doc.title, tokens);
        prefix.ids.extend(&title.ids);
        prefix.offsets.extend(std::iter::repeat_n((0, 0), title.ids.len()));
        prefix.ids.push(tokens.sep);
        prefix.offsets.push((0, 0));
        if mode == ContextMode::TitleLead2 {
            for &range in sentences.iter().take(2) {
                let lead = tokenize_range(doc, &c2b, range, tokens);
                prefix.ids.extend(lead.ids);
                prefix.offsets.extend(lead.offsets);
                prefix.ids.push(tokens.sep);
                prefix.offsets.push((0, 0));
            }
        }
    }

    let target = tokenize_range(doc, &c2b, (a, b), tokens);
    let mut drops = DropCounts::default();
    let mut inside = Vec::new();
    for m in doc.mentions.iter().filter(|m| m.start_char >= a && m.start_char < b) {
        if m.end_char > b {
            drops.straddling += 1;
        } else {
            inside.push(m);
        }
    }
    let target_room = max_len.min(target.ids.len());
    let (mut labels, d) = align_spans(&inside, &target.offsets, target_room, doc, entities);
    drops.add(&d);

    let room = max_len - target_room;
    if prefix.ids.len() > room {
        if room <= 1 {
            prefix = Tokenized::default();
        } else {
            prefix.ids.truncate(room - 1);
            prefix.offsets.truncate(room - 1);
            prefix.ids.push(tokens.sep);
            prefix.offsets.push((0, 0));
        }
    }
    let shift = prefix.ids.len();
    for l in &mut labels {
        l.span.start += shift;
        l.span.end += shift;
    }
    let mut ids = prefix.ids;
    let mut offsets = prefix.offsets;
    ids.extend(&target.ids[..target_room]);
    offsets.extend(&target.offsets[..target_room]);
    Ok((
        Context {
            doc_id: doc.doc_id.clone(),
            tokens: ids,
            char_offsets: offsets,
            labels,
            prefix_len: shift,
            source_range: (a, b),
        },
        drops,
    ))
}

/// Text within `window_bytes` bytes on each side of the mention, snapped
/// outward to character boundaries; only the given mention is labeled.
pub fn window_context(
    doc: &Document,
    mention: &CharMention,
    window_bytes: usize,
    max_len: usize,
    tokens: &TokenVocab,
    entities: &EntityVocab,
) -> Result<Context> {
    if window_bytes == 0 {
        return Err(Error::Config("window_bytes must be positive".into()));
    }
    let c2b = char_to_byte(&doc.text);
    let n = c2b.len() - 1;
    if mention.start_char >= mention.end_char || mention.end_char > n {
        return Err(Error::InvalidDocument {
            doc_id: doc.doc_id.clone(),
            message: format!("mention [{}, {}) out of range", mention.start_char, mention.end_char),
        });
    }
    let lo_byte = c2b[mention.start_char].saturating_sub(window_bytes);
    let hi_byte = (c2b[mention.end_char] + window_bytes).min(doc.text.len());
    // Last char starting at or before lo_byte; first char boundary at or after hi_byte.
    let lo = c2b.partition_point(|&b| b <= lo_byte) - 1;
    let hi = c2b.partition_point(|&b| b < hi_byte);
    let mut tok = tokenize_range(doc, &c2b, (lo, hi), tokens);
    let (mut labels, drops) = align_spans(&[mention], &tok.offsets, usize::MAX, doc, entities);
    if drops.total() > 0 {
        return Err(Error::InvalidDocument {
            doc_id: doc.doc_id.clone(),
            message: "window mention could not be aligned".into(),
        });
    }
    if tok.ids.len() > max_len {
        let span = labels[0].span;
        let width = span.end - span.start + 1;
        let keep_from = if width >= max_len {
            span.start
        } else {
            span.start
                .saturating_sub((max_len - width) / 2)
                .min(tok.ids.len() - max_len)
        };
        tok.ids = tok.ids[keep_from..].iter().take(max_len).copied().collect();
        tok.offsets = tok.offsets[keep_from..].iter().take(max_len).copied().collect();
        let l = &mut labels[0];
        l.span.start -= keep_from;
        l.span.end = (l.span.end - keep_from).min(max_len - 1);
    }
    Ok(Context {
        doc_id: doc.doc_id.clone(),
        tokens: tok.ids,
        char_offsets: tok.offsets,
        labels,
        prefix_len: 0,
        source_range: (lo, hi),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub documents: usize,
    pub contexts: usize,
    pub input_mentions: usize,
    pub labels: usize,
    pub linked_labels: usize,
    pub entities: usize,
    pub drops: DropCounts,
}

/// Chunks every document in parallel; output follows input order.
pub fn build_corpus(
    docs: &[Document],
    cfg: &ChunkConfig,
    tokens: &TokenVocab,
    entities: &EntityVocab,
) -> Result<(Vec<Context>, CorpusSummary)> {
    let parts: Vec<(Vec<Context>, DropCounts)> = docs
        .par_iter()
        .map(|d| chunk_document(d, cfg, tokens, entities))
        .collect::<Result<_>>()?;
    let mut summary = CorpusSummary {
        documents: docs.len(),
        input_mentions: docs.iter().map(|d| d.mentions.len()).sum(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut contexts = Vec::new();
    for (ctxs, drops) in parts {
        summary.drops.add(&drops);
        for c in &ctxs {
            summary.labels += c.labels.len();
            for l in &c.labels {
                if let Some(e) = l.entity {
                    summary.linked_labels += 1;
                    seen.insert(e);
                }
            }
        }
        contexts.extend(ctxs);
    }
    summary.contexts = contexts.len();
    summary.entities = seen.len();
    Ok((contexts, summary))
}

/// Token counts over titles and texts, for building a vocabulary.
pub fn count_tokens(docs: &[Document]) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for d in docs {
        for t in token_strings(&d.title).into_iter().chain(token_strings(&d.text)) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
}

/// Entity ids in order of first appearance.
pub fn collect_entities(docs: &[Document]) -> EntityVocab {
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    for m in docs.iter().flat_map(|d| &d.mentions) {
        if let Some(e) = &m.entity {
            if seen.insert(e.clone()) {
                ids.push(e.clone());
            }
        }
    }
    EntityVocab::new(ids).expect("deduplicated")
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads and validates a JSON-lines document file; doc ids must be unique.
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(path)?;
    let mut ids = HashSet::new();
    for d in &docs {
        d.validate()?;
        if !ids.insert(d.doc_id.as_str()) {
            return Err(Error::DuplicateDocument(d.doc_id.clone()));
        }
    }
    Ok(docs)
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(path, docs)
}

pub fn read_contexts(path: &Path) -> Result<Vec<Context>> {
    let ctxs: Vec<Context> = read_jsonl(path)?;
    for c in &ctxs {
        c.check()?;
    }
    Ok(ctxs)
}

pub fn write_contexts(path: &Path, contexts: &[Context]) -> Result<()> {
    write_jsonl(path, contexts)
}
