//! Alias tables: surface string to candidate entities, with redirect
//! resolution and the recall/ambiguity audit used to compare tables.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::read_tsv;
use crate::error::{Error, Result};
use crate::vocab::EntityVocab;

pub use crate::text::normalize_alias;

/// Normalized alias to an ordered, duplicate-free list of entity indices.
#[derive(Clone, Debug, Default)]
pub struct AliasTable {
    map: HashMap<String, Vec<usize>>,
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<S: AsRef<str>>(entries: impl IntoIterator<Item = (S, usize)>) -> Self {
        let mut t = Self::new();
        for (alias, e) in entries {
            t.insert(alias.as_ref(), e);
        }
        t
    }

    /// Appends `entity` under the normalized alias unless already present.
    pub fn insert(&mut self, alias: &str, entity: usize) {
        let list = self.map.entry(normalize_alias(alias)).or_default();
        if !list.contains(&entity) {
            list.push(entity);
        }
    }

    /// Candidates for a surface string; the input is normalized first.
    pub fn lookup(&self, surface: &str) -> &[usize] {
        self.map.get(&normalize_alias(surface)).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn aliases(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// One unresolved row of an alias file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawAlias {
    pub alias: String,
    pub target: String,
}

impl RawAlias {
    pub fn new(alias: impl Into<String>, target: impl Into<String>) -> Self {
        Self { alias: alias.into(), target: target.into() }
    }
}

/// Reads `alias<TAB>entity_id` rows.
pub fn read_aliases(path: &Path) -> Result<Vec<RawAlias>> {
    Ok(read_tsv(path, 2)?
        .into_iter()
        .map(|(_, f)| RawAlias::new(f[0].clone(), f[1].trim()))
        .collect())
}

/// Entity-id redirects, checked to be acyclic on construction.
#[derive(Clone, Debug, Default)]
pub struct RedirectMap {
    map: HashMap<String, String>,
}

impl RedirectMap {
    pub fn new(map: HashMap<String, String>) -> Result<Self> {
        let mut done: HashSet<&str> = HashSet::new();
        for start in map.keys() {
            let mut path: Vec<&str> = Vec::new();
            let mut cur = start.as_str();
            while !done.contains(cur) {
                if let Some(at) = path.iter().position(|p| *p == cur) {
                    let mut cycle: Vec<String> = path[at..].iter().map(|s| s.to_string()).collect();
                    cycle.push(cur.to_string());
                    return Err(Error::RedirectCycle(cycle));
                }
                path.push(cur);
                match map.get(cur) {
                    Some(next) => cur = next,
                    None => break,
                }
            }
            done.extend(path);
        }
        Ok(Self { map })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, S)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect())
    }

    /// Reads `from<TAB>to` rows.
    pub fn load_tsv(path: &Path) -> Result<Self> {
        let rows = read_tsv(path, 2)?;
        Self::new(rows.into_iter().map(|(_, f)| (f[0].trim().to_string(), f[1].trim().to_string())).collect())
    }

    /// Follows redirects to a fixed point.
    pub fn resolve<'a>(&'a self, mut id: &'a str) -> &'a str {
        while let Some(next) = self.map.get(id) {
            id = next;
        }
        id
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub input: usize,
    pub resolved: usize,
    pub dropped: usize,
    /// Percentage of input entries whose target resolved into the vocabulary.
    pub conversion: f64,
}

/// Resolves raw targets through `redirects` and keeps those found in `vocab`.
pub fn resolve(entries: &[RawAlias], redirects: &RedirectMap, vocab: &EntityVocab) -> (AliasTable, ConversionReport) {
    let mut table = AliasTable::new();
    let mut resolved = 0;
    for e in entries {
        if let Some(idx) = vocab.get(redirects.resolve(&e.target)) {
            table.insert(&e.alias, idx);
            resolved += 1;
        }
    }
    let input = entries.len();
    let conversion = if input == 0 { 0.0 } else { 100.0 * resolved as f64 / input as f64 };
    (table, ConversionReport { input, resolved, dropped: input - resolved, conversion })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AliasStats {
    pub gold_recall: f64,
    pub avg_ambiguity: f64,
}

/// Gold recall (%) and average candidates per mention over `(surface, gold)` pairs.
pub fn table_stats<S: AsRef<str>>(table: &AliasTable, mentions: &[(S, usize)]) -> Result<AliasStats> {
    if mentions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut found = 0usize;
    let mut total = 0usize;
    for (surface, gold) in mentions {
        let c = table.lookup(surface.as_ref());
        total += c.len();
        found += usize::from(c.contains(gold));
    }
    let n = mentions.len() as f64;
    Ok(AliasStats { gold_recall: 100.0 * found as f64 / n, avg_ambiguity: total as f64 / n })
}

/// The JSON written by the audit command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub conversion: f64,
    pub gold_recall: f64,
    pub avg_ambiguity: f64,
}

impl StatsReport {
    pub fn new(conv: &ConversionReport, stats: &AliasStats) -> Self {
        Self { conversion: conv.conversion, gold_recall: stats.gold_recall, avg_ambiguity: stats.avg_ambiguity }
    }
}
