//! Disambiguation accuracy, strong-matching micro-F1, and report output.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::corpus::{Context, Span};
use crate::error::{Error, Result};
use crate::model::{CandidateScope, Model};
use crate::scalar::Scalar;
use crate::training::CandidateMode;
use crate::vocab::EntityVocab;

/// A predicted (or gold) mention: token span plus entity index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkingPrediction {
    pub span: Span,
    pub entity: usize,
}

impl LinkingPrediction {
    pub fn new(start: usize, end: usize, entity: usize) -> Self {
        Self { span: Span::new(start, end), entity }
    }
}

/// Percentage of labeled gold mentions predicted correctly. `None` golds are skipped.
pub fn disambiguation_accuracy(preds: &[usize], golds: &[Option<usize>]) -> Result<f64> {
    if preds.len() != golds.len() {
        return Err(Error::CountMismatch { preds: preds.len(), golds: golds.len() });
    }
    let (mut n, mut correct) = (0usize, 0usize);
    for (p, g) in preds.iter().zip(golds) {
        if let Some(g) = g {
            n += 1;
            correct += usize::from(p == g);
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(100.0 * correct as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MicroF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub n_pred: usize,
    pub n_gold: usize,
}

/// Exact span-and-entity matching pooled over all documents.
///
/// `golds` holds `(span, entity)` per document; unlinked gold mentions are ignored.
/// Duplicate predictions within a document count once.
pub fn strong_matching_micro_f1(
    preds: &[Vec<LinkingPrediction>],
    golds: &[Vec<(Span, Option<usize>)>],
) -> Result<MicroF1> {
    if preds.len() != golds.len() {
        return Err(Error::CountMismatch { preds: preds.len(), golds: golds.len() });
    }
    let mut m = MicroF1::default();
    for (p, g) in preds.iter().zip(golds) {
        let gold: HashSet<LinkingPrediction> = g
            .iter()
            .filter_map(|&(span, e)| e.map(|entity| LinkingPrediction { span, entity }))
            .collect();
        let pred: HashSet<&LinkingPrediction> = p.iter().collect();
        m.correct += pred.iter().filter(|x| gold.contains(x)).count();
        m.n_pred += pred.len();
        m.n_gold += gold.len();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    m.precision = ratio(m.correct, m.n_pred);
    m.recall = ratio(m.correct, m.n_gold);
    let s = m.precision + m.recall;
    m.f1 = if s == 0.0 { 0.0 } else { 2.0 * m.precision * m.recall / s };
    Ok(m)
}

/// Report JSON; which fields are present depends on the evaluation mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub n_mentions: usize,
    pub n_pred: usize,
}

impl EvalReport {
    pub fn accuracy(accuracy: f64, n_mentions: usize) -> Self {
        Self { accuracy: Some(accuracy), n_mentions, n_pred: n_mentions, ..Self::default() }
    }

    pub fn f1(m: &MicroF1) -> Self {
        Self {
            precision: Some(m.precision),
            recall: Some(m.recall),
            f1: Some(m.f1),
            n_mentions: m.n_gold,
            n_pred: m.n_pred,
            ..Self::default()
        }
    }
}

/// One misclassified mention for error analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub surface: String,
    pub gold: String,
    /// Best predictions with scores, best first (at most two are written).
    pub top: Vec<(String, f64)>,
}

pub fn format_error_dump(rows: &[ErrorRow]) -> String {
    let mut out = String::from("surface\tgold\tpred1\tscore1\tpred2\tscore2\n");
    for r in rows {
        let _ = write!(out, "{}\t{}", clean(&r.surface), r.gold);
        for i in 0..2 {
            match r.top.get(i) {
                Some((e, s)) => { let _ = write!(out, "\t{e}\t{s:.6}"); }
                None => out.push_str("\t\t"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_error_dump(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    fs::write(path, format_error_dump(rows)).map_err(|e| Error::io(path, e))
}

/// Per-mention outcome of disambiguating gold spans.
#[derive(Clone, Debug, PartialEq)]
pub struct MentionOutcome {
    pub context: usize,
    pub surface: String,
    pub gold: usize,
    /// `None` when the mention had no candidates.
    pub predicted: Option<usize>,
    /// Up to two best `(entity, score)` pairs.
    pub top: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DisambiguationEval {
    pub accuracy: f64,
    pub outcomes: Vec<MentionOutcome>,
}

impl DisambiguationEval {
    pub fn errors(&self, entities: &EntityVocab) -> Vec<ErrorRow> {
        let name = |e: usize| entities.name(e).unwrap_or("?").to_string();
        self.outcomes
            .iter()
            .filter(|o| o.predicted != Some(o.gold))
            .map(|o| ErrorRow {
                surface: o.surface.clone(),
                gold: name(o.gold),
                top: o.top.iter().map(|&(e, s)| (name(e), s)).collect(),
            })
            .collect()
    }
}

/// Disambiguates every linked gold mention. With alias candidates, a mention
/// whose lookup is empty counts as wrong.
pub fn evaluate_disambiguation<T: Scalar>(
    model: &Model<T>,
    contexts: &[Context],
    mode: CandidateMode<'_>,
) -> Result<DisambiguationEval> {
    let per_ctx = contexts
        .par_iter()
        .enumerate()
        .map(|(ci, ctx)| {
            let linked: Vec<_> = ctx.labels.iter().filter(|l| l.entity.is_some()).collect();
            let cands: Vec<Vec<usize>> = match mode {
                CandidateMode::AllEntities => Vec::new(),
                CandidateMode::AliasCandidates(t) => linked.iter().map(|l| t.lookup(&l.surface).to_vec()).collect(),
            };
            let keep: Vec<usize> = (0..linked.len())
                .filter(|&i| matches!(mode, CandidateMode::AllEntities) || !cands[i].is_empty())
                .collect();
            let spans: Vec<Span> = keep.iter().map(|&i| linked[i].span).collect();
            let kept: Vec<Vec<usize>> = match mode {
                CandidateMode::AllEntities => Vec::new(),
                CandidateMode::AliasCandidates(_) => keep.iter().map(|&i| cands[i].clone()).collect(),
            };
            let scope = match mode {
                CandidateMode::AllEntities => CandidateScope::All,
                CandidateMode::AliasCandidates(_) => CandidateScope::PerMention(&kept),
            };
            let preds = model.predict_disambiguation(&ctx.tokens, &spans, &scope)?;
            let mut out: Vec<MentionOutcome> = linked
                .iter()
                .map(|l| MentionOutcome {
                    context: ci,
                    surface: l.surface.clone(),
                    gold: l.entity.expect("linked"),
                    predicted: None,
                    top: Vec::new(),
                })
                .collect();
            for (&i, p) in keep.iter().zip(preds) {
                out[i].predicted = Some(p.entity);
                out[i].top.push((p.entity, p.score.as_f64()));
                if let Some((e, s)) = p.runner_up {
                    out[i].top.push((e, s.as_f64()));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<MentionOutcome> = per_ctx.into_iter().flatten().collect();
    let preds: Vec<usize> = outcomes.iter().map(|o| o.predicted.unwrap_or(usize::MAX)).collect();
    let golds: Vec<Option<usize>> = outcomes.iter().map(|o| Some(o.gold)).collect();
    Ok(DisambiguationEval { accuracy: disambiguation_accuracy(&preds, &golds)?, outcomes })
}

/// Detects and links mentions in every context, scored against its labels.
pub fn evaluate_end_to_end<T: Scalar>(model: &Model<T>, contexts: &[Context]) -> Result<MicroF1> {
    let preds = contexts
        .par_iter()
        .map(|c| {
            Ok(model
                .predict_end_to_end(&c.tokens)?
                .into_iter()
                .map(|l| LinkingPrediction { span: l.span, entity: l.entity })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let golds: Vec<Vec<(Span, Option<usize>)>> =
        contexts.iter().map(|c| c.labels.iter().map(|l| (l.span, l.entity)).collect()).collect();
    strong_matching_micro_f1(&preds, &golds)
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}
