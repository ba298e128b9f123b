//! Independent oracles and random instance generators shared by the
//! integration and acceptance tests.

#![allow(dead_code)]

use entlink::candidates::{CandidateConfig, CandidateSources, PageLinks, PhraseTable};
use entlink::corpus::{ChunkConfig, Context, MentionLabel, Span};
use entlink::noising::NoiseConfig;
use entlink::synthetic::{self, World, WorldConfig};
use entlink::training::PretrainData;
use entlink::vocab::{EntityVocab, TokenVocab};
use entlink::model::{CandidateScope, Example, LossWeights};
use entlink::{Model64, ModelConfig};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        d_model: 8,
        n_heads: 2,
        d_ff: 16,
        d_entity: 8,
        span_hidden: None,
        max_len: 16,
        vocab_size: 50,
        n_entities: 20,
        pad_id: 0,
        layer_norm_eps: 1e-5,
    }
}

/// An owned example: tokens, labels, and per-mention candidate lists.
#[derive(Clone, Debug)]
pub struct Instance {
    pub tokens: Vec<usize>,
    pub labels: Vec<MentionLabel>,
    pub candidates: Vec<Vec<usize>>,
}

impl Instance {
    pub fn example(&self) -> Example<'_> {
        Example {
            tokens: &self.tokens,
            labels: &self.labels,
            candidates: CandidateScope::PerMention(&self.candidates),
        }
    }
}

pub fn random_spans(rng: &mut impl Rng, len: usize, max: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut pos = 0;
    while spans.len() < max && pos < len {
        let start = pos + rng.gen_range(0..3);
        let end = start + rng.gen_range(0..3);
        if end >= len {
            break;
        }
        spans.push(Span::new(start, end));
        pos = end + 1;
    }
    spans
}

/// Random example against `cfg`: padded tail, some unlinked mentions, golds in candidates.
pub fn random_instance(rng: &mut impl Rng, cfg: &ModelConfig, with_pad: bool) -> Instance {
    let len = rng.gen_range(3..=cfg.max_len);
    let n_pad = if with_pad { rng.gen_range(0..=len / 3) } else { 0 };
    let tokens: Vec<usize> = (0..len)
        .map(|i| if i >= len - n_pad { cfg.pad_id } else { rng.gen_range(1..cfg.vocab_size) })
        .collect();
    let spans = random_spans(rng, len - n_pad, 3);
    let mut labels = Vec::new();
    let mut candidates = Vec::new();
    for s in spans {
        let entity = if rng.gen_bool(0.75) { Some(rng.gen_range(0..cfg.n_entities)) } else { None };
        let mut cands: Vec<usize> = (0..cfg.n_entities).collect();
        cands.shuffle(rng);
        cands.truncate(rng.gen_range(1..=cfg.n_entities.min(8)));
        if let Some(e) = entity {
            if !cands.contains(&e) {
                let at = rng.gen_range(0..=cands.len());
                cands.insert(at, e);
            }
        }
        labels.push(MentionLabel { span: s, entity, surface: String::new() });
        candidates.push(cands);
    }
    Instance { tokens, labels, candidates }
}

/// Per-group relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`
/// against central differences of `total_loss`.
pub fn finite_difference_check(
    model: &mut Model64,
    batch: &[Instance],
    weights: &LossWeights,
    step: f64,
) -> Vec<(String, f64, f64)> {
    let examples: Vec<Example<'_>> = batch.iter().map(Instance::example).collect();
    let (_, grads) = model.loss_and_grads(&examples, weights).unwrap();
    drop(examples);
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.data.to_vec()))
        .collect();
    let mut out = Vec::new();
    for (gi, (name, a)) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; a.len()];
        for (j, n) in numeric.iter_mut().enumerate() {
            let orig = model.params.tensors_mut()[gi].data[j];
            let eval = |v: f64, model: &mut Model64| {
                model.params.tensors_mut()[gi].data[j] = v;
                let ex: Vec<Example<'_>> = batch.iter().map(Instance::example).collect();
                model.total_loss(&ex, weights).unwrap().total
            };
            let plus = eval(orig + step, model);
            let minus = eval(orig - step, model);
            model.params.tensors_mut()[gi].data[j] = orig;
            *n = (plus - minus) / (2.0 * step);
        }
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Groups whose true gradient is identically zero (the key bias shifts every
        // score of a query equally) leave only rounding noise on both sides.
        let denom = na.max(nn);
        let rel = if denom < 1e-9 { 0.0 } else { diff / denom };
        out.push((name.clone(), rel, na));
    }
    out
}

/// Brute-force linking loss: explicit exp/sum loops over candidates for each
/// labeled mention, given precomputed span vectors and entity rows.
pub fn brute_linking_nll(span_vecs: &[Vec<f64>], entity_rows: &[Vec<Vec<f64>>], gold_pos: &[usize]) -> f64 {
    let mut total = 0.0;
    for ((s, rows), &g) in span_vecs.iter().zip(entity_rows).zip(gold_pos) {
        let scores: Vec<f64> = rows.iter().map(|e| e.iter().zip(s).map(|(a, b)| a * b).sum()).collect();
        let mut z = 0.0;
        for sc in &scores {
            z += sc.exp();
        }
        total += -(scores[g].exp() / z).ln();
    }
    total
}

/// Brute-force BIO cross-entropy: mean over non-pad tokens of −log softmax(target).
pub fn brute_bio(logits: &[[f64; 3]], targets: &[usize], keep: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for ((l, &t), &k) in logits.iter().zip(targets).zip(keep) {
        if !k {
            continue;
        }
        let z: f64 = l.iter().map(|x| x.exp()).sum();
        total += -(l[t].exp() / z).ln();
        n += 1;
    }
    if n == 0 { 0.0 } else { total / n as f64 }
}

/// Mean over examples of the summed per-mention NLL, with span vectors from the model.
pub fn brute_batch_linking(m: &Model64, batch: &[Instance]) -> f64 {
    let mut total = 0.0;
    for inst in batch {
        let h = m.encode(&inst.tokens).unwrap();
        let (mut svs, mut rows, mut golds) = (Vec::new(), Vec::new(), Vec::new());
        for (l, cands) in inst.labels.iter().zip(&inst.candidates) {
            let Some(g) = l.entity else { continue };
            svs.push(m.span_repr(&h, l.span).unwrap().to_vec());
            rows.push(cands.iter().map(|&e| m.params.entity_emb.row(e).to_vec()).collect());
            golds.push(cands.iter().position(|&e| e == g).unwrap());
        }
        total += brute_linking_nll(&svs, &rows, &golds);
    }
    total / batch.len() as f64
}

/// BIO cross-entropy with logits and tags computed by hand.
pub fn brute_example_bio(m: &Model64, inst: &Instance) -> f64 {
    let h = m.encode(&inst.tokens).unwrap();
    let h = h.last();
    let n = inst.tokens.len();
    let mut targets = vec![0usize; n];
    for l in &inst.labels {
        targets[l.span.start] = 1;
        for t in &mut targets[l.span.start + 1..=l.span.end] {
            *t = 2;
        }
    }
    let logits: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let mut row = [0.0; 3];
            for (k, r) in row.iter_mut().enumerate() {
                *r = m.params.bio_b[k];
                for j in 0..h.ncols() {
                    *r += h[[i, j]] * m.params.bio_w[[j, k]];
                }
            }
            row
        })
        .collect();
    let keep: Vec<bool> = inst.tokens.iter().map(|&t| t != m.config.pad_id).collect();
    brute_bio(&logits, &targets, &keep)
}

/// A generated world turned into contexts, with everything pretraining needs.
pub struct Fixture {
    pub world: World,
    pub entities: EntityVocab,
    pub tokens: TokenVocab,
    pub contexts: Vec<Context>,
    pub links: PageLinks,
    pub phrases: PhraseTable,
}

impl Fixture {
    pub fn new(n_entities: usize, n_docs: usize, sentences: usize, seed: u64) -> Self {
        let world = World::new(WorldConfig { n_entities, seed, ..Default::default() });
        let entities = world.entity_vocab();
        let docs = world.documents("fx", n_docs, sentences, None, seed + 1);
        let chunk = ChunkConfig { chunk_chars: 10_000, max_len: 64 };
        let (tokens, contexts, _) = synthetic::build(&docs, &chunk, &entities, None).unwrap();
        let links = PageLinks::from_contexts(&contexts);
        let phrases = world.phrase_table();
        Self { world, entities, tokens, contexts, links, phrases }
    }

    pub fn model_config(&self, d: usize) -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            d_model: d,
            n_heads: 4,
            d_ff: 2 * d,
            d_entity: d,
            max_len: 64,
            vocab_size: self.tokens.len(),
            n_entities: self.entities.len(),
            ..Default::default()
        }
    }

    pub fn data<'a>(&'a self, cands: &'a CandidateConfig, noise: &'a NoiseConfig) -> PretrainData<'a> {
        PretrainData {
            contexts: &self.contexts,
            token_vocab: &self.tokens,
            sources: CandidateSources { page_links: &self.links, phrase_table: &self.phrases, n_entities: self.entities.len() },
            candidates: cands,
            noise,
        }
    }
}

pub fn small_candidates(seed: u64) -> CandidateConfig {
    CandidateConfig { k: 32, max_page: 8, max_phrase: 8, min_random: 8, rng_seed: seed }
}
