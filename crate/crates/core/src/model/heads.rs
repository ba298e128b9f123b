//! Span projection, entity scoring and the BIO head.

use ndarray::{Array1, Array2, ArrayView1};

use super::encoder::HiddenStates;
use super::ops;
use super::params::Params;
use super::Model;
use crate::corpus::Span;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Entities a span is scored against.
#[derive(Clone, Copy, Debug)]
pub enum Candidates<'a> {
    /// Every entity in the vocabulary.
    All,
    List(&'a [usize]),
}

pub(crate) struct SpanCache<T> {
    z: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
    pub out: Array2<T>,
}

impl<T: Scalar> Model<T> {
    pub(crate) fn check_span(&self, span: Span, len: usize) -> Result<()> {
        if span.start > span.end || span.end >= len {
            return Err(Error::SpanOutOfRange {
                start: span.start,
                end: span.end,
                len,
            });
        }
        Ok(())
    }

    pub(crate) fn span_forward(&self, h: &Array2<T>, spans: &[Span]) -> Result<SpanCache<T>> {
        let d = self.config.d_model;
        let mut z = Array2::zeros((spans.len(), 2 * d));
        for (i, &sp) in spans.iter().enumerate() {
            self.check_span(sp, h.nrows())?;
            let mut row = z.row_mut(i);
            row.slice_mut(ndarray::s![..d]).assign(&h.row(sp.start));
            row.slice_mut(ndarray::s![d..]).assign(&h.row(sp.end));
        }
        let p = &self.params;
        let pre = ops::linear(&z.view(), &p.span_w1, &p.span_b1);
        let act = pre.mapv(ops::gelu);
        let out = ops::linear(&act.view(), &p.span_w2, &p.span_b2);
        Ok(SpanCache { z, pre, act, out })
    }

    pub(crate) fn span_backward(
        &self,
        cache: &SpanCache<T>,
        spans: &[Span],
        d_out: &Array2<T>,
        d_h: &mut Array2<T>,
        g: &mut Params<T>,
    ) {
        let p = &self.params;
        let d_act = ops::linear_backward(&cache.act.view(), &p.span_w2, d_out, &mut g.span_w2, &mut g.span_b2);
        let d_pre = d_act * &cache.pre.mapv(ops::gelu_grad);
        let d_z = ops::linear_backward(&cache.z.view(), &p.span_w1, &d_pre, &mut g.span_w1, &mut g.span_b1);
        let d = self.config.d_model;
        for (i, sp) in spans.iter().enumerate() {
            let row = d_z.row(i);
            let mut a = d_h.row_mut(sp.start);
            a += &row.slice(ndarray::s![..d]);
            let mut b = d_h.row_mut(sp.end);
            b += &row.slice(ndarray::s![d..]);
        }
    }

    /// `MLP([H_start, H_end])`, a vector of length `d_entity`.
    pub fn span_repr(&self, hidden: &HiddenStates<T>, span: Span) -> Result<Array1<T>> {
        let cache = self.span_forward(hidden.last(), &[span])?;
        Ok(cache.out.row(0).to_owned())
    }

    pub(crate) fn check_candidates(&self, cands: Candidates<'_>) -> Result<()> {
        if let Candidates::List(list) = cands {
            if list.is_empty() {
                return Err(Error::EmptyCandidates);
            }
            if let Some(&bad) = list.iter().find(|&&e| e >= self.config.n_entities) {
                return Err(Error::IndexOutOfRange {
                    what: "entity vocabulary",
                    index: bad,
                    size: self.config.n_entities,
                });
            }
        }
        Ok(())
    }

    /// Dot-product scores against the candidates, in candidate order.
    pub(crate) fn raw_scores(&self, s: ArrayView1<T>, cands: Candidates<'_>) -> Vec<T> {
        let e = &self.params.entity_emb;
        match cands {
            Candidates::All => e.dot(&s).to_vec(),
            Candidates::List(list) => list.iter().map(|&c| e.row(c).dot(&s)).collect(),
        }
    }

    /// Scores `ŝ · e_c` and their softmax over the given candidates.
    pub fn score_and_prob(&self, span_vec: &Array1<T>, cands: Candidates<'_>) -> Result<(Vec<T>, Vec<T>)> {
        self.check_candidates(cands)?;
        let scores = self.raw_scores(span_vec.view(), cands);
        let probs = ops::softmax(&scores);
        Ok((scores, probs))
    }

    pub(crate) fn bio_logits(&self, h: &Array2<T>) -> Array2<T> {
        ops::linear(&h.view(), &self.params.bio_w, &self.params.bio_b)
    }
}

/// Entity at a candidate position.
pub(crate) fn entity_at(cands: Candidates<'_>, pos: usize) -> usize {
    match cands {
        Candidates::All => pos,
        Candidates::List(l) => l[pos],
    }
}

/// Position of the best score; exact ties go to the lowest entity index.
pub(crate) fn argmax_entity<T: Scalar>(scores: &[T], cands: Candidates<'_>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        let b = scores[best];
        if s > b || (s == b && entity_at(cands, i) < entity_at(cands, best)) {
            best = i;
        }
    }
    best
}
