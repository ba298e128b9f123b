//! Per-example candidate sets: golds, page links, phrase-table neighbours,
//! uniform random fill, and in-batch negatives.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Context, MentionLabel};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::text::normalize_alias;
use crate::vocab::EntityVocab;

pub(crate) fn read_tsv(path: &Path, min_fields: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() < min_fields {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {min_fields} tab-separated fields"),
            });
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

/// Normalized surface string to lexically related entities, best first.
#[derive(Clone, Debug, Default)]
pub struct PhraseTable {
    map: HashMap<String, Vec<usize>>,
}

impl PhraseTable {
    /// Entries are `(surface, entity, rank)`; lower rank sorts first, ties keep input order.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, usize, f64)>) -> Self {
        let mut ranked: HashMap<String, Vec<(f64, usize, usize)>> = HashMap::new();
        for (seq, (surface, entity, rank)) in entries.into_iter().enumerate() {
            ranked
                .entry(normalize_alias(&surface))
                .or_default()
                .push((rank, seq, entity));
        }
        let map = ranked
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut seen = HashSet::new();
                let list = v.into_iter().map(|x| x.2).filter(|e| seen.insert(*e)).collect();
                (k, list)
            })
            .collect();
        Self { map }
    }

    /// Loads `surface<TAB>entity_id<TAB>rank`; returns the table and the
    /// number of rows whose entity is not in the vocabulary.
    pub fn load_tsv(path: &Path, entities: &EntityVocab) -> Result<(Self, usize)> {
        let mut skipped = 0;
        let mut entries = Vec::new();
        for (line, f) in read_tsv(path, 3)? {
            let rank: f64 = f[2].trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("bad rank {:?}", f[2]),
            })?;
            match entities.get(&f[1]) {
                Some(e) => entries.push((f[0].clone(), e, rank)),
                None => skipped += 1,
            }
        }
        Ok((Self::from_entries(entries), skipped))
    }

    pub fn get(&self, surface: &str) -> &[usize] {
        self.map
            .get(&normalize_alias(surface))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Entities linked anywhere in each article.
#[derive(Clone, Debug, Default)]
pub struct PageLinks {
    map: HashMap<String, Vec<usize>>,
}

impl PageLinks {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, usize)>) -> Self {
        let mut map: HashMap<String, Vec<usize>> = HashMap::new();
        for (doc, e) in pairs {
            map.entry(doc).or_default().push(e);
        }
        for v in map.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        Self { map }
    }

    /// Gold entities of every context, grouped by document.
    pub fn from_contexts(contexts: &[Context]) -> Self {
        Self::from_pairs(contexts.iter().flat_map(|c| {
            c.labels
                .iter()
                .filter_map(|l| l.entity.map(|e| (c.doc_id.clone(), e)))
        }))
    }

    /// Loads `doc_id<TAB>entity_id`; unknown entities are skipped and counted.
    pub fn load_tsv(path: &Path, entities: &EntityVocab) -> Result<(Self, usize)> {
        let mut skipped = 0;
        let mut pairs = Vec::new();
        for (_, f) in read_tsv(path, 2)? {
            match entities.get(&f[1]) {
                Some(e) => pairs.push((f[0].clone(), e)),
                None => skipped += 1,
            }
        }
        Ok((Self::from_pairs(pairs), skipped))
    }

    pub fn get(&self, doc_id: &str) -> &[usize] {
        self.map.get(doc_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub k: usize,
    pub max_page: usize,
    pub max_phrase: usize,
    pub min_random: usize,
    pub rng_seed: u64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            k: 768,
            max_page: 256,
            max_phrase: 384,
            min_random: 128,
            rng_seed: 0,
        }
    }
}

impl CandidateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_page + self.max_phrase + self.min_random > self.k {
            return Err(Error::Config(format!(
                "max_page + max_phrase + min_random = {} exceeds k = {}",
                self.max_page + self.max_phrase + self.min_random,
                self.k
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub entities: Vec<usize>,
    /// Position of each label's gold within `entities`; `None` for unlinked labels.
    pub gold_positions: Vec<Option<usize>>,
    pub n_gold: usize,
    pub n_page: usize,
    pub n_phrase: usize,
    pub n_random: usize,
}

/// Up to `budget` entities from the article's links, sampled without replacement.
pub fn page_candidates(doc_id: &str, links: &PageLinks, budget: usize, rng: &mut Rng) -> Vec<usize> {
    let all = links.get(doc_id);
    if all.len() <= budget {
        return all.to_vec();
    }
    index::sample(rng, all.len(), budget)
        .into_iter()
        .map(|i| all[i])
        .collect()
}

/// The first `budget` phrase-table entries for `surface`.
pub fn phrase_candidates(surface: &str, table: &PhraseTable, budget: usize) -> Vec<usize> {
    let list = table.get(surface);
    list[..budget.min(list.len())].to_vec()
}

/// Hard-negative sources; either may be empty.
#[derive(Clone, Copy, Debug)]
pub struct CandidateSources<'a> {
    pub page_links: &'a PageLinks,
    pub phrase_table: &'a PhraseTable,
    pub n_entities: usize,
}

struct Builder {
    entities: Vec<usize>,
    present: HashSet<usize>,
}

impl Builder {
    fn push(&mut self, e: usize) -> bool {
        if self.present.insert(e) {
            self.entities.push(e);
            true
        } else {
            false
        }
    }
}

/// Per-mention split of `total`: floor division, remainder to the earliest mentions.
pub fn split_budget(total: usize, n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    (0..n).map(|i| total / n + usize::from(i < total % n)).collect()
}

/// Builds a size-`k` candidate set. Priority on collisions is
/// gold > page > phrase > random; page and phrase entries are cut short
/// where needed so that at least `min_random` slots remain for random fill.
pub fn assemble_candidates(
    labels: &[MentionLabel],
    surfaces: &[&str],
    doc_id: &str,
    cfg: &CandidateConfig,
    sources: &CandidateSources<'_>,
) -> Result<CandidateSet> {
    cfg.validate()?;
    if surfaces.len() != labels.len() {
        return Err(Error::CountMismatch {
            preds: surfaces.len(),
            golds: labels.len(),
        });
    }
    if cfg.k > sources.n_entities {
        return Err(Error::CandidateSetTooLarge {
            k: cfg.k,
            n_entities: sources.n_entities,
        });
    }
    let mut rng = seed::rng(cfg.rng_seed, &[]);
    let mut b = Builder {
        entities: Vec::with_capacity(cfg.k),
        present: HashSet::with_capacity(cfg.k),
    };
    for l in labels {
        if let Some(e) = l.entity {
            if e >= sources.n_entities {
                return Err(Error::IndexOutOfRange {
                    what: "entity vocabulary",
                    index: e,
                    size: sources.n_entities,
                });
            }
            b.push(e);
        }
    }
    let n_gold = b.entities.len();
    if n_gold > cfg.k {
        return Err(Error::CandidateBudgetTooSmall { k: cfg.k, golds: n_gold });
    }
    let room = cfg.k.saturating_sub(cfg.min_random).max(n_gold);

    let mut n_page = 0;
    for e in page_candidates(doc_id, sources.page_links, cfg.max_page, &mut rng) {
        if b.entities.len() >= room {
            break;
        }
        n_page += usize::from(b.push(e));
    }

    let mut n_phrase = 0;
    'mentions: for (surface, budget) in surfaces.iter().zip(split_budget(cfg.max_phrase, labels.len())) {
        for e in phrase_candidates(surface, sources.phrase_table, budget) {
            if b.entities.len() >= room {
                break 'mentions;
            }
            n_phrase += usize::from(b.push(e));
        }
    }

    let need = cfg.k - b.entities.len();
    let free = sources.n_entities - b.entities.len();
    if need * 4 >= free {
        let pool: Vec<usize> = (0..sources.n_entities).filter(|e| !b.present.contains(e)).collect();
        for i in index::sample(&mut rng, pool.len(), need) {
            b.push(pool[i]);
        }
    } else {
        while b.entities.len() < cfg.k {
            b.push(rng.gen_range(0..sources.n_entities));
        }
    }

    let pos: HashMap<usize, usize> = b.entities.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    Ok(CandidateSet {
        gold_positions: labels.iter().map(|l| l.entity.map(|e| pos[&e])).collect(),
        entities: b.entities,
        n_gold,
        n_page,
        n_phrase,
        n_random: need,
    })
}

/// Replaces every set with the union over the batch, ordered by first
/// appearance, and re-indexes gold positions.
pub fn batch_negatives(sets: &[CandidateSet]) -> Vec<CandidateSet> {
    if sets.len() <= 1 {
        return sets.to_vec();
    }
    let mut union = Vec::new();
    let mut pos: HashMap<usize, usize> = HashMap::new();
    for s in sets {
        for &e in &s.entities {
            if let std::collections::hash_map::Entry::Vacant(v) = pos.entry(e) {
                v.insert(union.len());
                union.push(e);
            }
        }
    }
    sets.iter()
        .map(|s| CandidateSet {
            entities: union.clone(),
            gold_positions: s
                .gold_positions
                .iter()
                .map(|g| g.map(|p| pos[&s.entities[p]]))
                .collect(),
            ..*s
        })
        .collect()
}
