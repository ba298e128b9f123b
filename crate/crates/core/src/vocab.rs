//! Token and entity vocabularies. On disk both are one entry per line,
//! line number = index.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const MASK: &str = "[MASK]";
pub const SEP: &str = "[SEP]";
pub const RESERVED: [&str; 4] = [PAD, UNK, MASK, SEP];

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(raw.lines().map(str::to_string).collect())
}

fn write_lines<'a>(path: &Path, lines: impl Iterator<Item = &'a String>) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for l in lines {
        writeln!(f, "{l}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn index_of(items: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(items.len());
    for (i, t) in items.iter().enumerate() {
        if index.insert(t.clone(), i).is_some() {
            return Err(Error::Vocab(format!("duplicate {what} {t:?}")));
        }
    }
    Ok(index)
}

#[derive(Clone, Debug)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub pad: usize,
    pub unk: usize,
    pub mask: usize,
    pub sep: usize,
    regular: Vec<usize>,
}

impl TokenVocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let index = index_of(&tokens, "token")?;
        let find = |t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("reserved token {t} missing")))
        };
        let (pad, unk, mask, sep) = (find(PAD)?, find(UNK)?, find(MASK)?, find(SEP)?);
        let regular = (0..tokens.len())
            .filter(|&i| ![pad, unk, mask, sep].contains(&i))
            .collect();
        Ok(Self {
            tokens,
            index,
            pad,
            unk,
            mask,
            sep,
            regular,
        })
    }

    /// Reserved tokens first, then `words` in order (duplicates skipped).
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for w in words {
            let w = w.into();
            if seen.insert(w.clone()) {
                tokens.push(w);
            }
        }
        Self::new(tokens).expect("reserved tokens present")
    }

    /// Builds a vocabulary from normalized token counts; ties ordered lexicographically.
    pub fn from_counts(counts: &HashMap<String, usize>, min_count: usize) -> Self {
        let mut by_count: BTreeMap<std::cmp::Reverse<usize>, Vec<&String>> = BTreeMap::new();
        for (t, &c) in counts {
            if c >= min_count {
                by_count.entry(std::cmp::Reverse(c)).or_default().push(t);
            }
        }
        let words = by_count.into_values().flat_map(|mut v| {
            v.sort();
            v.into_iter().cloned()
        });
        Self::from_words(words)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_lines(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_lines(path, self.tokens.iter())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Looks up an already-normalized token.
    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(self.unk)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id == self.pad || id == self.unk || id == self.mask || id == self.sep
    }

    /// Indices that are not reserved, in ascending order.
    pub fn regular_ids(&self) -> &[usize] {
        &self.regular
    }
}

#[derive(Clone, Debug, Default)]
pub struct EntityVocab {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl EntityVocab {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        let index = index_of(&ids, "entity id")?;
        Ok(Self { ids, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_lines(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_lines(path, self.ids.iter())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn name(&self, idx: usize) -> Option<&str> {
        self.ids.get(idx).map(String::as_str)
    }
}
