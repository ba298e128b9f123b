//! Adam with warmup/decay and gradient clipping, plus the pretraining and
//! fine-tuning loops built on it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aliastable::AliasTable;
use crate::candidates::{assemble_candidates, batch_negatives, CandidateConfig, CandidateSources};
use crate::corpus::{Context, MentionLabel};
use crate::error::{Error, Result};
use crate::model::{checkpoint, CandidateScope, Example, Gradients, LossWeights, Model, Params, ENTITY_EMBEDDINGS};
use crate::noising::{apply_noise, NoiseConfig};
use crate::scalar::Scalar;
use crate::seed;
use crate::vocab::TokenVocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub total_steps: usize,
    pub warmup_frac: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub freeze_entity_embeddings: bool,
    pub link_weight: f64,
    pub bio_weight: f64,
    pub rng_seed: u64,
    /// Log a record every this many steps (the last step is always logged).
    pub log_every: usize,
    /// Save a checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: usize,
    /// Folds for learning-rate selection by cross-validation; 0 or 1 disables it.
    pub cv_folds: usize,
    /// Learning rates tried when `cv_folds > 1`.
    pub cv_lrs: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            total_steps: 1000,
            warmup_frac: 0.1,
            batch_size: 32,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            freeze_entity_embeddings: false,
            link_weight: 1.0,
            bio_weight: 1.0,
            rng_seed: 0,
            log_every: 10,
            checkpoint_every: 0,
            cv_folds: 0,
            cv_lrs: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        // False for NaN as well.
        let pos = |x: f64| x > 0.0;
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return bad("warmup_frac must be in (0, 1)");
        }
        if self.total_steps == 0 || self.batch_size == 0 {
            return bad("total_steps and batch_size must be positive");
        }
        if !pos(self.base_lr) || !pos(self.clip_norm) {
            return bad("base_lr and clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !pos(self.eps) {
            return bad("adam betas must be in [0, 1) and eps positive");
        }
        if self.link_weight < 0.0 || self.bio_weight < 0.0 {
            return bad("loss weights must be non-negative");
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { linking: self.link_weight, bio: self.bio_weight }
    }
}

/// Linear warmup from 0 to `base_lr`, then linear decay to 0 at `total_steps`.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    let total = cfg.total_steps as f64;
    let warm = cfg.warmup_frac * total;
    let s = (step as f64).min(total);
    if s < warm {
        cfg.base_lr * s / warm
    } else {
        cfg.base_lr * (total - s) / (total - warm)
    }
}

/// Global L2 norm over every tensor, accumulated in f64.
pub fn global_norm<T: Scalar>(grads: &Gradients<T>) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|x| x.as_f64() * x.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so the global norm is at most `clip_norm`. Returns the norm before clipping.
pub fn clip_gradients<T: Scalar>(grads: &mut Gradients<T>, clip_norm: f64) -> Result<f64> {
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Err(Error::NonFiniteNorm);
    }
    if norm > clip_norm {
        let s = T::of(clip_norm / norm);
        for t in grads.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }
    Ok(norm)
}

/// Adam moments, shaped like the parameters.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub m: Params<T>,
    pub v: Params<T>,
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(model: &Model<T>) -> Self {
        Self { m: Params::zeros(&model.config), v: Params::zeros(&model.config), step: 0 }
    }
}

/// One bias-corrected Adam update. The entity table is left untouched when frozen.
pub fn adam_step<T: Scalar>(
    params: &mut Params<T>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let gs = grads.tensors();
    let mut updates: Vec<Option<Vec<T>>> = Vec::with_capacity(gs.len());
    for ((g, m), v) in gs.iter().zip(state.m.tensors_mut()).zip(state.v.tensors_mut()) {
        if cfg.freeze_entity_embeddings && g.name == ENTITY_EMBEDDINGS {
            updates.push(None);
            continue;
        }
        let mut u = Vec::with_capacity(g.data.len());
        for ((&gi, mi), vi) in g.data.iter().zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
            let gf = gi.as_f64();
            let mf = b1 * mi.as_f64() + (1.0 - b1) * gf;
            let vf = b2 * vi.as_f64() + (1.0 - b2) * gf * gf;
            *mi = T::of(mf);
            *vi = T::of(vf);
            let step = lr * (mf / c1) / ((vf / c2).sqrt() + cfg.eps);
            u.push(T::of(step));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteUpdate { group: g.name.clone() });
        }
        updates.push(Some(u));
    }
    for (p, u) in params.tensors_mut().into_iter().zip(updates) {
        if let Some(u) = u {
            for (x, d) in p.data.iter_mut().zip(u) {
                *x -= d;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub linking_acc: f64,
}

impl StepRecord {
    pub const HEADER: &'static str = "step\tlr\tloss\tlinking_acc";

    pub fn tsv(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.step, self.lr, self.loss, self.linking_acc)
    }
}

/// Where a run writes its log and checkpoints; both optional.
#[derive(Clone, Debug, Default)]
pub struct RunOutputs {
    pub log: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainSummary {
    pub steps: usize,
    /// Logged records, in step order.
    pub records: Vec<StepRecord>,
    /// Total loss at every step.
    pub losses: Vec<f64>,
    /// Mentions dropped because their gold was not among the alias candidates.
    pub skipped_mentions: usize,
    pub last_checkpoint: Option<PathBuf>,
}

/// A batch element after candidate assembly and noising.
struct Prepared {
    tokens: Vec<usize>,
    labels: Vec<MentionLabel>,
    candidates: PreparedScope,
}

enum PreparedScope {
    All,
    Shared(Vec<usize>),
    PerMention(Vec<Vec<usize>>),
}

impl Prepared {
    fn example(&self) -> Example<'_> {
        Example {
            tokens: &self.tokens,
            labels: &self.labels,
            candidates: match &self.candidates {
                PreparedScope::All => CandidateScope::All,
                PreparedScope::Shared(l) => CandidateScope::Shared(l),
                PreparedScope::PerMention(l) => CandidateScope::PerMention(l),
            },
        }
    }
}

/// Stream of batches: a fresh permutation of the data every epoch.
struct BatchSampler {
    n: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, epoch: 0, order: Vec::new(), pos: 0 }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order = (0..self.n).collect();
                self.order.shuffle(&mut seed::rng(self.seed, &[seed::stream::BATCH, self.epoch]));
                self.epoch += 1;
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn save_checkpoint<T: Scalar>(model: &Model<T>, out: &RunOutputs, summary: &mut TrainSummary) -> Result<()> {
    if let Some(p) = &out.checkpoint {
        checkpoint::save(model, p)?;
        summary.last_checkpoint = Some(p.clone());
    }
    Ok(())
}

fn open_log(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    writeln!(w, "{}", StepRecord::HEADER).map_err(|e| Error::io(path, e))?;
    Ok(w)
}

fn train_loop<T, F>(
    model: &mut Model<T>,
    cfg: &TrainConfig,
    n_examples: usize,
    out: &RunOutputs,
    prepare: F,
) -> Result<TrainSummary>
where
    T: Scalar,
    F: Fn(usize, &[usize]) -> Result<Vec<Prepared>>,
{
    cfg.validate()?;
    if n_examples == 0 {
        return Err(Error::EmptyDataset);
    }
    let weights = cfg.weights();
    let mut state = OptimizerState::new(model);
    let mut sampler = BatchSampler::new(n_examples, cfg.rng_seed);
    let mut summary = TrainSummary::default();
    let mut log = out.log.as_deref().map(open_log).transpose()?;
    let log_path = out.log.clone().unwrap_or_default();
    let log_every = cfg.log_every.max(1);

    for step in 1..=cfg.total_steps {
        let idx = sampler.next(cfg.batch_size);
        let batch = prepare(step, &idx)?;
        let examples: Vec<Example<'_>> = batch.iter().map(Prepared::example).collect();
        let abort = |e: Error, summary: &TrainSummary| {
            match &summary.last_checkpoint {
                Some(p) => warn!("aborting at step {step} ({e}); last good checkpoint is {}", p.display()),
                None => warn!("aborting at step {step} ({e}); no checkpoint was written"),
            }
            e
        };
        let (report, mut grads) = match model.loss_and_grads(&examples, &weights) {
            Ok(r) => r,
            Err(e) if e.is_non_finite() => return Err(abort(e, &summary)),
            Err(e) => return Err(e),
        };
        let loss = report.total.as_f64();
        if !loss.is_finite() {
            return Err(abort(Error::NonFiniteLoss { step }, &summary));
        }
        if cfg.freeze_entity_embeddings {
            grads.entity_emb.fill(T::zero());
        }
        let lr = lr_schedule(step, cfg);
        if let Err(e) = clip_gradients(&mut grads, cfg.clip_norm)
            .and_then(|_| adam_step(&mut model.params, &grads, &mut state, lr, cfg))
        {
            return Err(if e.is_non_finite() { abort(e, &summary) } else { e });
        }

        summary.steps = step;
        summary.losses.push(loss);
        if step % log_every == 0 || step == cfg.total_steps {
            let rec = StepRecord { step, lr, loss, linking_acc: report.accuracy() };
            info!("step {step} lr {lr:.3e} loss {loss:.4} acc {:.3}", rec.linking_acc);
            if let Some(w) = log.as_mut() {
                writeln!(w, "{}", rec.tsv()).and_then(|_| w.flush()).map_err(|e| Error::io(&log_path, e))?;
            }
            summary.records.push(rec);
        }
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.total_steps {
            save_checkpoint(model, out, &mut summary)?;
        }
    }
    save_checkpoint(model, out, &mut summary)?;
    Ok(summary)
}

/// Everything pretraining needs besides the model and optimizer settings.
#[derive(Clone, Copy, Debug)]
pub struct PretrainData<'a> {
    pub contexts: &'a [Context],
    pub token_vocab: &'a TokenVocab,
    pub sources: CandidateSources<'a>,
    pub candidates: &'a CandidateConfig,
    pub noise: &'a NoiseConfig,
}

/// Pretraining: per-example candidate sets shared across the batch, input noise,
/// joint linking and BIO loss.
pub fn pretrain<T: Scalar>(
    model: &mut Model<T>,
    data: &PretrainData<'_>,
    cfg: &TrainConfig,
    out: &RunOutputs,
) -> Result<TrainSummary> {
    data.candidates.validate()?;
    data.noise.validate()?;
    let prepare = |step: usize, idx: &[usize]| -> Result<Vec<Prepared>> {
        let sets = idx
            .par_iter()
            .enumerate()
            .map(|(i, &c)| {
                let ctx = &data.contexts[c];
                let surfaces: Vec<&str> = ctx.labels.iter().map(|l| l.surface.as_str()).collect();
                let cand_cfg = CandidateConfig {
                    rng_seed: seed::derive(data.candidates.rng_seed, &[step as u64, i as u64]),
                    ..*data.candidates
                };
                assemble_candidates(&ctx.labels, &surfaces, &ctx.doc_id, &cand_cfg, &data.sources)
            })
            .collect::<Result<Vec<_>>>()?;
        let sets = batch_negatives(&sets);
        idx.par_iter()
            .zip(sets)
            .enumerate()
            .map(|(i, (&c, set))| {
                let ctx = &data.contexts[c];
                let tokens = if data.noise.enabled {
                    let nc = NoiseConfig {
                        rng_seed: seed::derive(data.noise.rng_seed, &[step as u64, i as u64]),
                        ..*data.noise
                    };
                    apply_noise(&ctx.tokens, &nc, data.token_vocab)?.0
                } else {
                    ctx.tokens.clone()
                };
                Ok(Prepared { tokens, labels: ctx.labels.clone(), candidates: PreparedScope::Shared(set.entities) })
            })
            .collect()
    };
    train_loop(model, cfg, data.contexts.len(), out, prepare)
}

/// Candidate sets used for fine-tuning and disambiguation evaluation.
#[derive(Clone, Copy, Debug)]
pub enum CandidateMode<'a> {
    /// Per-mention alias-table lookup of the mention surface.
    AliasCandidates(&'a AliasTable),
    /// Softmax over the whole entity vocabulary.
    AllEntities,
}

/// Alias-table candidates per label. Labels whose gold is missing from their
/// candidates are turned into unlinked labels; the second value counts them.
pub fn alias_candidates(ctx: &Context, table: &AliasTable) -> (Vec<MentionLabel>, Vec<Vec<usize>>, usize) {
    let mut labels = ctx.labels.clone();
    let mut skipped = 0;
    let cands = labels
        .iter_mut()
        .map(|l| {
            let c = table.lookup(&l.surface).to_vec();
            if let Some(g) = l.entity {
                if !c.contains(&g) {
                    l.entity = None;
                    skipped += 1;
                }
            }
            c
        })
        .collect();
    (labels, cands, skipped)
}

/// Fine-tuning on labeled contexts without input noise.
pub fn finetune<T: Scalar>(
    model: &mut Model<T>,
    contexts: &[Context],
    mode: CandidateMode<'_>,
    cfg: &TrainConfig,
    out: &RunOutputs,
) -> Result<TrainSummary> {
    let (prepped, skipped): (Vec<(Vec<MentionLabel>, PreparedScopeProto)>, usize) = match mode {
        CandidateMode::AllEntities => (contexts.iter().map(|c| (c.labels.clone(), PreparedScopeProto::All)).collect(), 0),
        CandidateMode::AliasCandidates(table) => {
            let mut skipped = 0;
            let v = contexts
                .iter()
                .map(|c| {
                    let (labels, cands, s) = alias_candidates(c, table);
                    skipped += s;
                    (labels, PreparedScopeProto::PerMention(cands))
                })
                .collect();
            (v, skipped)
        }
    };
    if skipped > 0 {
        info!("{skipped} mentions skipped: gold not among alias candidates");
    }
    let prepare = |_step: usize, idx: &[usize]| -> Result<Vec<Prepared>> {
        Ok(idx
            .iter()
            .map(|&c| {
                let (labels, scope) = &prepped[c];
                Prepared {
                    tokens: contexts[c].tokens.clone(),
                    labels: labels.clone(),
                    candidates: match scope {
                        PreparedScopeProto::All => PreparedScope::All,
                        PreparedScopeProto::PerMention(l) => PreparedScope::PerMention(l.clone()),
                    },
                }
            })
            .collect())
    };
    let mut summary = train_loop(model, cfg, contexts.len(), out, prepare)?;
    summary.skipped_mentions = skipped;
    Ok(summary)
}

enum PreparedScopeProto {
    All,
    PerMention(Vec<Vec<usize>>),
}

/// `k` disjoint held-out folds over `0..n` after a seeded shuffle, as (train, held-out) pairs.
pub fn kfold_splits(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n {
        return Err(Error::Config(format!("cannot split {n} examples into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, &[seed::stream::FOLDS]));
    Ok((0..k)
        .map(|f| {
            let (mut train, mut held) = (Vec::new(), Vec::new());
            for (i, &x) in order.iter().enumerate() {
                if i % k == f { held.push(x) } else { train.push(x) }
            }
            train.sort_unstable();
            held.sort_unstable();
            (train, held)
        })
        .collect())
}

/// Picks the learning rate with the best mean held-out score across folds.
/// `score(lr, train, held_out)` trains from scratch and returns a score to maximize.
pub fn select_lr_by_cv<F>(lrs: &[f64], n: usize, folds: usize, seed: u64, mut score: F) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(f64, &[usize], &[usize]) -> Result<f64>,
{
    if lrs.is_empty() {
        return Err(Error::Config("no learning rates to cross-validate".into()));
    }
    let splits = kfold_splits(n, folds, seed)?;
    let mut means = Vec::with_capacity(lrs.len());
    for &lr in lrs {
        let mut total = 0.0;
        for (train, held) in &splits {
            total += score(lr, train, held)?;
        }
        means.push(total / splits.len() as f64);
    }
    let best = (0..lrs.len()).fold(0, |b, i| if means[i] > means[b] { i } else { b });
    Ok((lrs[best], means))
}
