//! Linking and mention-detection losses with exact gradients.

use ndarray::Array2;
use rayon::prelude::*;

use super::bio::{self, Tag};
use super::encoder::HiddenStates;
use super::heads::{argmax_entity, Candidates};
use super::ops;
use super::params::{Gradients, Params};
use super::Model;
use crate::corpus::{check_non_overlapping, MentionLabel, Span};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Where each labeled mention of an example draws its candidates from.
#[derive(Clone, Copy, Debug)]
pub enum CandidateScope<'a> {
    All,
    /// One list for every mention of the example.
    Shared(&'a [usize]),
    /// One list per label, parallel to the example's labels.
    PerMention(&'a [Vec<usize>]),
}

impl<'a> CandidateScope<'a> {
    pub fn for_mention(&self, i: usize) -> Candidates<'a> {
        match *self {
            CandidateScope::All => Candidates::All,
            CandidateScope::Shared(l) => Candidates::List(l),
            CandidateScope::PerMention(ls) => Candidates::List(&ls[i]),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub tokens: &'a [usize],
    pub labels: &'a [MentionLabel],
    pub candidates: CandidateScope<'a>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub linking: f64,
    pub bio: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { linking: 1.0, bio: 1.0 }
    }
}

/// Batch means of the loss terms, plus linking accuracy counts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport<T> {
    pub total: T,
    pub linking: T,
    pub bio: T,
    pub linked_mentions: usize,
    pub correct: usize,
    pub examples: usize,
}

impl<T: Scalar> LossReport<T> {
    pub fn accuracy(&self) -> f64 {
        if self.linked_mentions == 0 {
            0.0
        } else {
            self.correct as f64 / self.linked_mentions as f64
        }
    }
}

struct ExampleLoss<T> {
    linking: T,
    bio: T,
    linked: usize,
    correct: usize,
}

impl<T: Scalar> Model<T> {
    /// BIO cross-entropy averaged over non-padding tokens; zero if there are none.
    pub fn bio_loss(&self, tokens: &[usize], hidden: &HiddenStates<T>, spans: &[Span]) -> Result<T> {
        let h = hidden.last();
        let tags = bio::encode(spans, h.nrows())?;
        let logits = self.bio_logits(h);
        Ok(self.bio_terms(tokens, &tags, &logits, None).0)
    }

    /// Loss value and, if `grad_scale` is given, `d loss / d logits` scaled by it.
    fn bio_terms(&self, tokens: &[usize], tags: &[Tag], logits: &Array2<T>, grad_scale: Option<T>) -> (T, Option<Array2<T>>) {
        let n = tokens.iter().filter(|&&t| t != self.config.pad_id).count();
        let mut d = grad_scale.map(|_| Array2::zeros(logits.raw_dim()));
        if n == 0 {
            return (T::zero(), d);
        }
        let inv_n = T::one() / T::of(n as f64);
        let mut total = T::zero();
        for (i, (&tok, &tag)) in tokens.iter().zip(tags).enumerate() {
            if tok == self.config.pad_id {
                continue;
            }
            let row: Vec<T> = logits.row(i).to_vec();
            total += ops::log_sum_exp(&row) - row[tag.index()];
            if let (Some(d), Some(scale)) = (d.as_mut(), grad_scale) {
                let p = ops::softmax(&row);
                for (k, pk) in p.into_iter().enumerate() {
                    let target = if k == tag.index() { T::one() } else { T::zero() };
                    d[[i, k]] = (pk - target) * inv_n * scale;
                }
            }
        }
        (total * inv_n, d)
    }

    fn check_labels(&self, ex: &Example<'_>) -> Result<()> {
        let spans: Vec<Span> = ex.labels.iter().map(|l| l.span).collect();
        for &s in &spans {
            self.check_span(s, ex.tokens.len())?;
        }
        check_non_overlapping(&spans)?;
        if let CandidateScope::PerMention(ls) = ex.candidates {
            if ls.len() != ex.labels.len() {
                return Err(Error::CountMismatch {
                    preds: ls.len(),
                    golds: ex.labels.len(),
                });
            }
        }
        Ok(())
    }

    /// Forward pass for one example; accumulates `scale`-weighted gradients when asked.
    fn example_pass(
        &self,
        ex: &Example<'_>,
        w: &LossWeights,
        grads: Option<(&mut Params<T>, T)>,
    ) -> Result<ExampleLoss<T>> {
        self.check_labels(ex)?;
        let trace = self.encode_traced(ex.tokens)?;
        let h = trace.hidden.last();
        let (w_link, w_bio) = (T::of(w.linking), T::of(w.bio));
        let want_grads = grads.is_some();
        let scale = grads.as_ref().map(|g| g.1).unwrap_or(T::one());
        let mut d_h = Array2::<T>::zeros(h.raw_dim());
        let mut ent_updates: Vec<(usize, T, usize)> = Vec::new();

        let linked: Vec<usize> = (0..ex.labels.len()).filter(|&i| ex.labels[i].entity.is_some()).collect();
        let mut out = ExampleLoss {
            linking: T::zero(),
            bio: T::zero(),
            linked: linked.len(),
            correct: 0,
        };

        let mut span_grad: Option<(Vec<Span>, super::heads::SpanCache<T>, Array2<T>)> = None;
        if !linked.is_empty() {
            let spans: Vec<Span> = linked.iter().map(|&i| ex.labels[i].span).collect();
            let cache = self.span_forward(h, &spans)?;
            let mut d_out = Array2::<T>::zeros(cache.out.raw_dim());
            for (row, &li) in linked.iter().enumerate() {
                let cands = ex.candidates.for_mention(li);
                self.check_candidates(cands)?;
                let gold = ex.labels[li].entity.expect("linked");
                let gold_pos = match cands {
                    Candidates::All if gold < self.config.n_entities => gold,
                    Candidates::All => return Err(Error::GoldMissing { entity: gold }),
                    Candidates::List(l) => l.iter().position(|&e| e == gold).ok_or(Error::GoldMissing { entity: gold })?,
                };
                let s_vec = cache.out.row(row);
                let scores = self.raw_scores(s_vec, cands);
                out.linking += ops::log_sum_exp(&scores) - scores[gold_pos];
                if argmax_entity(&scores, cands) == gold_pos {
                    out.correct += 1;
                }
                if want_grads && w_link != T::zero() {
                    let probs = ops::softmax(&scores);
                    let mut d_s = d_out.row_mut(row);
                    for (pos, p) in probs.into_iter().enumerate() {
                        let target = if pos == gold_pos { T::one() } else { T::zero() };
                        let ds = (p - target) * w_link * scale;
                        if ds == T::zero() {
                            continue;
                        }
                        let e = super::heads::entity_at(cands, pos);
                        d_s.scaled_add(ds, &self.params.entity_emb.row(e));
                        ent_updates.push((e, ds, row));
                    }
                }
            }
            if want_grads && w_link != T::zero() {
                span_grad = Some((spans, cache, d_out));
            } else {
                drop(cache);
            }
        }

        let spans_all: Vec<Span> = ex.labels.iter().map(|l| l.span).collect();
        let tags = bio::encode(&spans_all, ex.tokens.len())?;
        let logits = self.bio_logits(h);
        let bio_scale = (want_grads && w_bio != T::zero()).then_some(w_bio * scale);
        let (bio_loss, d_logits) = self.bio_terms(ex.tokens, &tags, &logits, bio_scale);
        out.bio = bio_loss;

        if let Some((g, _)) = grads {
            if let Some((spans, cache, d_out)) = span_grad {
                for (e, ds, row) in ent_updates {
                    let mut ge = g.entity_emb.row_mut(e);
                    ge.scaled_add(ds, &cache.out.row(row));
                }
                self.span_backward(&cache, &spans, &d_out, &mut d_h, g);
            }
            if let Some(d_logits) = d_logits {
                g.bio_w.scaled_add(T::one(), &h.t().dot(&d_logits));
                g.bio_b += &d_logits.sum_axis(ndarray::Axis(0));
                d_h += &d_logits.dot(&self.params.bio_w.t());
            }
            self.encode_backward(&trace, d_h, g);
        }
        Ok(out)
    }

    fn reduce(&self, parts: Vec<ExampleLoss<T>>, w: &LossWeights) -> LossReport<T> {
        let n = parts.len();
        let mut r = LossReport {
            examples: n,
            ..Default::default()
        };
        if n == 0 {
            return r;
        }
        for p in &parts {
            r.linking += p.linking;
            r.bio += p.bio;
            r.linked_mentions += p.linked;
            r.correct += p.correct;
        }
        let inv = T::one() / T::of(n as f64);
        r.linking *= inv;
        r.bio *= inv;
        r.total = T::of(w.linking) * r.linking + T::of(w.bio) * r.bio;
        r
    }

    /// Weighted linking + BIO loss, averaged over the batch.
    pub fn total_loss(&self, batch: &[Example<'_>], w: &LossWeights) -> Result<LossReport<T>> {
        let parts = batch
            .par_iter()
            .map(|ex| self.example_pass(ex, w, None))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.reduce(parts, w))
    }

    /// Mean over examples of the summed negative log-likelihood of each linked gold.
    pub fn linking_loss(&self, batch: &[Example<'_>]) -> Result<T> {
        Ok(self.total_loss(batch, &LossWeights { linking: 1.0, bio: 0.0 })?.linking)
    }

    /// Loss report and exact gradients of `report.total` w.r.t. every parameter.
    ///
    /// Examples are processed in fixed-size chunks whose partial sums are
    /// added in chunk order, so results do not depend on thread scheduling.
    pub fn loss_and_grads(&self, batch: &[Example<'_>], w: &LossWeights) -> Result<(LossReport<T>, Gradients<T>)> {
        const CHUNK: usize = 4;
        let scale = if batch.is_empty() { T::zero() } else { T::one() / T::of(batch.len() as f64) };
        let chunks: Vec<(Vec<ExampleLoss<T>>, Gradients<T>)> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = Params::zeros(&self.config);
                let parts = chunk
                    .iter()
                    .map(|ex| self.example_pass(ex, w, Some((&mut g, scale))))
                    .collect::<Result<Vec<_>>>()?;
                Ok((parts, g))
            })
            .collect::<Result<_>>()?;
        let mut total = Params::zeros(&self.config);
        let mut parts = Vec::with_capacity(batch.len());
        for (p, g) in chunks {
            total.add_scaled(&g, T::one());
            parts.extend(p);
        }
        if let Some(group) = total.first_non_finite() {
            return Err(Error::NonFiniteGradient { group });
        }
        Ok((self.reduce(parts, w), total))
    }
}
