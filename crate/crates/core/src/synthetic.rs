//! Generated worlds with planted mention/entity structure, for experiments and
//! tests that need data with a known answer.
//!
//! Entities come in groups that share a surface form, so the surface alone is
//! ambiguous; each entity also owns a few cue words, and a mention's sentence
//! always carries some of its cues. Resolving a mention means reading the cues.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aliastable::{AliasTable, RawAlias};
use crate::candidates::PhraseTable;
use crate::corpus::{build_corpus, count_tokens, CharMention, ChunkConfig, Context, CorpusSummary, Document};
use crate::error::Result;
use crate::seed;
use crate::vocab::{EntityVocab, TokenVocab};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_entities: usize,
    /// Entities sharing each surface form.
    pub group_size: usize,
    pub cues_per_entity: usize,
    /// Cue words placed in each mention's sentence.
    pub cues_per_mention: usize,
    pub n_filler: usize,
    pub filler_per_sentence: usize,
    /// Probability that a sentence's mention is unlinked.
    pub null_rate: f64,
    /// Zipf exponent for entity popularity; 0 is uniform.
    pub zipf: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_entities: 200,
            group_size: 4,
            cues_per_entity: 3,
            cues_per_mention: 2,
            n_filler: 100,
            filler_per_sentence: 5,
            null_rate: 0.1,
            zipf: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpec {
    pub id: String,
    pub surface: String,
    pub cues: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct World {
    pub config: WorldConfig,
    pub entities: Vec<EntitySpec>,
    filler: Vec<String>,
    null_surfaces: Vec<String>,
    popularity: Vec<f64>,
}

fn word(prefix: &str, i: usize) -> String {
    const SYL: [&str; 16] = ["ka", "lo", "mi", "ne", "pu", "ra", "si", "to", "va", "ze", "bo", "de", "fi", "gu", "ha", "ju"];
    let mut s = prefix.to_string();
    let mut n = i;
    loop {
        s.push_str(SYL[n % 16]);
        n /= 16;
        if n == 0 {
            break;
        }
    }
    s
}

impl World {
    pub fn new(config: WorldConfig) -> Self {
        let mut rng = seed::rng(config.seed, &[0x57]);
        let n_groups = config.n_entities.div_ceil(config.group_size.max(1));
        let surfaces: Vec<String> = (0..n_groups)
            .map(|g| if g % 3 == 2 { format!("{} {}", word("Mo", g), word("Ar", g)) } else { word("Mo", g) })
            .collect();
        let entities: Vec<EntitySpec> = (0..config.n_entities)
            .map(|i| EntitySpec {
                id: format!("Q{i:05}"),
                surface: surfaces[i % n_groups].clone(),
                cues: (0..config.cues_per_entity).map(|j| word("x", i * config.cues_per_entity + j)).collect(),
            })
            .collect();
        let mut popularity: Vec<f64> = (0..config.n_entities).map(|r| 1.0 / ((r + 1) as f64).powf(config.zipf)).collect();
        popularity.shuffle(&mut rng);
        Self {
            filler: (0..config.n_filler).map(|i| word("f", i)).collect(),
            null_surfaces: (0..8).map(|i| word("Nu", i)).collect(),
            entities,
            popularity,
            config,
        }
    }

    pub fn entity_vocab(&self) -> EntityVocab {
        EntityVocab::new(self.entities.iter().map(|e| e.id.clone()).collect()).expect("unique ids")
    }

    /// Alias rows: every entity under its group surface.
    pub fn alias_entries(&self) -> Vec<RawAlias> {
        self.entities.iter().map(|e| RawAlias::new(e.surface.clone(), e.id.clone())).collect()
    }

    pub fn alias_table(&self) -> AliasTable {
        AliasTable::from_entries(self.entities.iter().enumerate().map(|(i, e)| (e.surface.as_str(), i)))
    }

    /// Surface to the other members of its group, the hard lexical negatives.
    pub fn phrase_table(&self) -> PhraseTable {
        PhraseTable::from_entries(self.entities.iter().enumerate().map(|(i, e)| (e.surface.clone(), i, i as f64)))
    }

    /// `n_docs` documents of `sentences` sentences, one mention per sentence.
    /// `entities` restricts which entities may be mentioned.
    pub fn documents(&self, prefix: &str, n_docs: usize, sentences: usize, entities: Option<&[usize]>, seed: u64) -> Vec<Document> {
        let pool: Vec<usize> = entities.map_or_else(|| (0..self.entities.len()).collect(), <[usize]>::to_vec);
        let weights: Vec<f64> = pool.iter().map(|&e| self.popularity[e]).collect();
        let pick = WeightedIndex::new(&weights).expect("non-empty entity pool");
        (0..n_docs)
            .map(|d| {
                let mut rng = seed::rng(seed, &[d as u64]);
                let mut text = String::new();
                let mut mentions = Vec::new();
                for _ in 0..sentences {
                    if !text.is_empty() {
                        text.push('\n');
                    }
                    let linked = !rng.gen_bool(self.config.null_rate);
                    let (surface, entity, cues) = if linked {
                        let e = &self.entities[pool[pick.sample(&mut rng)]];
                        let cues: Vec<&str> =
                            e.cues.choose_multiple(&mut rng, self.config.cues_per_mention).map(String::as_str).collect();
                        (e.surface.as_str(), Some(e.id.clone()), cues)
                    } else {
                        (self.null_surfaces.choose(&mut rng).expect("null pool").as_str(), None, Vec::new())
                    };
                    let mut words: Vec<&str> = (0..self.config.filler_per_sentence)
                        .map(|_| self.filler.choose(&mut rng).expect("filler pool").as_str())
                        .collect();
                    for c in cues {
                        let at = rng.gen_range(0..=words.len());
                        words.insert(at, c);
                    }
                    let at = rng.gen_range(0..=words.len());
                    for (i, w) in words.iter().enumerate() {
                        if i == at {
                            push_mention(&mut text, surface, entity.clone(), &mut mentions);
                        }
                        push_word(&mut text, w);
                    }
                    if at == words.len() {
                        push_mention(&mut text, surface, entity, &mut mentions);
                    }
                    text.push_str(" .");
                }
                Document { doc_id: format!("{prefix}{d:05}"), title: format!("{prefix} {d}"), text, mentions }
            })
            .collect()
    }
}

fn push_word(text: &mut String, w: &str) {
    if !text.is_empty() && !text.ends_with('\n') {
        text.push(' ');
    }
    text.push_str(w);
}

fn push_mention(text: &mut String, surface: &str, entity: Option<String>, out: &mut Vec<CharMention>) {
    push_word(text, "");
    let start = text.chars().count();
    text.push_str(surface);
    out.push(CharMention { start_char: start, end_char: start + surface.chars().count(), entity });
}

/// Token vocabulary over `docs`, then chunked contexts.
pub fn build(
    docs: &[Document],
    chunk: &ChunkConfig,
    entities: &EntityVocab,
    vocab: Option<&TokenVocab>,
) -> Result<(TokenVocab, Vec<Context>, CorpusSummary)> {
    let vocab = vocab.cloned().unwrap_or_else(|| TokenVocab::from_counts(&count_tokens(docs), 1));
    let (contexts, summary) = build_corpus(docs, chunk, &vocab, entities)?;
    Ok((vocab, contexts, summary))
}
