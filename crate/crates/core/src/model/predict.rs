//! Inference: disambiguation of given spans and end-to-end linking.

use super::bio::{self, Tag};
use super::heads::{argmax_entity, entity_at};
use super::loss::CandidateScope;
use super::ops;
use super::Model;
use crate::corpus::Span;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Disambiguation<T> {
    pub entity: usize,
    pub score: T,
    /// Softmax probability within the candidate set.
    pub prob: T,
    /// Second-best entity and its score, if there was more than one candidate.
    pub runner_up: Option<(usize, T)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkedSpan<T> {
    pub span: Span,
    pub entity: usize,
    pub prob: T,
}

impl<T: Scalar> Model<T> {
    /// Best entity per span over its candidates; ties go to the lowest entity index.
    pub fn predict_disambiguation(
        &self,
        tokens: &[usize],
        spans: &[Span],
        candidates: &CandidateScope<'_>,
    ) -> Result<Vec<Disambiguation<T>>> {
        let hidden = self.encode(tokens)?;
        if spans.is_empty() {
            return Ok(Vec::new());
        }
        let cache = self.span_forward(hidden.last(), spans)?;
        let mut out = Vec::with_capacity(spans.len());
        for i in 0..spans.len() {
            let cands = candidates.for_mention(i);
            self.check_candidates(cands)?;
            let scores = self.raw_scores(cache.out.row(i), cands);
            let probs = ops::softmax(&scores);
            let best = argmax_entity(&scores, cands);
            let runner_up = (0..scores.len())
                .filter(|&p| p != best)
                .fold(None::<usize>, |acc, p| match acc {
                    Some(a) if scores[a] > scores[p] || (scores[a] == scores[p] && entity_at(cands, a) < entity_at(cands, p)) => Some(a),
                    _ => Some(p),
                })
                .map(|p| (entity_at(cands, p), scores[p]));
            out.push(Disambiguation {
                entity: entity_at(cands, best),
                score: scores[best],
                prob: probs[best],
                runner_up,
            });
        }
        Ok(out)
    }

    /// Per-token argmax BIO tags; padding is always `O`, ties favour `O`, then `B`.
    pub fn predict_tags(&self, tokens: &[usize]) -> Result<Vec<Tag>> {
        let hidden = self.encode(tokens)?;
        let logits = self.bio_logits(hidden.last());
        Ok(tokens
            .iter()
            .zip(logits.rows())
            .map(|(&tok, row)| {
                if tok == self.config.pad_id {
                    return Tag::O;
                }
                let mut best = Tag::O;
                for t in [Tag::B, Tag::I] {
                    if row[t.index()] > row[best.index()] {
                        best = t;
                    }
                }
                best
            })
            .collect())
    }

    /// Decodes predicted BIO tags into spans and links each over all entities.
    pub fn predict_end_to_end(&self, tokens: &[usize]) -> Result<Vec<LinkedSpan<T>>> {
        let spans = bio::decode(&self.predict_tags(tokens)?);
        self.link_spans(tokens, &spans)
    }

    pub(crate) fn link_spans(&self, tokens: &[usize], spans: &[Span]) -> Result<Vec<LinkedSpan<T>>> {
        let preds = self.predict_disambiguation(tokens, spans, &CandidateScope::All)?;
        Ok(spans
            .iter()
            .zip(preds)
            .map(|(&span, d)| LinkedSpan {
                span,
                entity: d.entity,
                prob: d.prob,
            })
            .collect())
    }
}
