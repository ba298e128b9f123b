//! Flat `key = value` run configuration with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! model.d_model = 64
//! noise.enabled = false
//! paths.corpus = data/corpus.jsonl
//! ```
//!
//! Every randomized component gets its seed from the single top-level `seed`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::candidates::CandidateConfig;
use crate::corpus::{ChunkConfig, ContextMode};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::noising::NoiseConfig;
use crate::seed::{self, stream};
use crate::training::TrainConfig;

/// Which candidates a fine-tuning or evaluation run scores against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ModeName {
    #[default]
    AliasCandidates,
    AllEntities,
}

impl FromStr for ModeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alias_candidates" => Ok(Self::AliasCandidates),
            "all_entities" => Ok(Self::AllEntities),
            _ => Err(Error::Config(format!("unknown mode {s:?} (expected alias_candidates or all_entities)"))),
        }
    }
}

impl fmt::Display for ModeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AliasCandidates => "alias_candidates",
            Self::AllEntities => "all_entities",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    /// Raw documents (JSONL).
    pub documents: Option<PathBuf>,
    /// Processed contexts (JSONL).
    pub corpus: Option<PathBuf>,
    pub token_vocab: Option<PathBuf>,
    pub entity_vocab: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub redirects: Option<PathBuf>,
    pub phrase_table: Option<PathBuf>,
    pub page_links: Option<PathBuf>,
    /// Checkpoint to start from (fine-tuning, evaluation, linking).
    pub init_checkpoint: Option<PathBuf>,
    /// Checkpoint a training run writes.
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub errors: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub context_mode: ContextMode,
    /// Byte window around each mention for evaluation contexts; 0 uses sentences.
    pub window_bytes: usize,
    /// Minimum count for a token to enter a newly built vocabulary.
    pub min_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { context_mode: ContextMode::default(), window_bytes: 0, min_count: 1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub candidates: CandidateConfig,
    pub noise: NoiseConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub chunk: ChunkConfig,
    pub data: DataConfig,
    pub finetune_mode: ModeName,
    pub eval_mode: ModeName,
}

trait Value: Sized {
    fn parse(s: &str) -> std::result::Result<Self, String>;
    fn show(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(usize, u64, f64, bool);

impl Value for ContextMode {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for ModeName {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for Option<PathBuf> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok((!s.is_empty()).then(|| PathBuf::from(s)))
    }
    fn show(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

impl Value for Option<usize> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() || s == "none" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| format!("{e}"))
        }
    }
    fn show(&self) -> String {
        self.map(|v| v.to_string()).unwrap_or_default()
    }
}

impl Value for Vec<f64> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(|x| x.parse().map_err(|e| format!("{e}"))).collect()
    }
    fn show(&self) -> String {
        self.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
    }
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        fn set_known(&mut self, key: &str, value: &str) -> Option<std::result::Result<(), String>> {
            match key {
                $($key => Some(Value::parse(value).map(|v| self.$($field).+ = v)),)*
                _ => None,
            }
        }

        /// Every key with its current value, in a fixed order.
        pub fn entries(&self) -> Vec<(&'static str, String)> {
            vec![$(($key, Value::show(&self.$($field).+))),*]
        }
    };
}

impl RunConfig {
    keys! {
        "seed" => seed,
        "paths.documents" => paths.documents,
        "paths.corpus" => paths.corpus,
        "paths.token_vocab" => paths.token_vocab,
        "paths.entity_vocab" => paths.entity_vocab,
        "paths.aliases" => paths.aliases,
        "paths.redirects" => paths.redirects,
        "paths.phrase_table" => paths.phrase_table,
        "paths.page_links" => paths.page_links,
        "paths.init_checkpoint" => paths.init_checkpoint,
        "paths.checkpoint" => paths.checkpoint,
        "paths.log" => paths.log,
        "paths.report" => paths.report,
        "paths.errors" => paths.errors,
        "paths.summary" => paths.summary,
        "candidates.k" => candidates.k,
        "candidates.max_page" => candidates.max_page,
        "candidates.max_phrase" => candidates.max_phrase,
        "candidates.min_random" => candidates.min_random,
        "noise.enabled" => noise.enabled,
        "noise.select_rate" => noise.select_rate,
        "noise.mask_frac" => noise.mask_frac,
        "noise.random_frac" => noise.random_frac,
        "noise.keep_frac" => noise.keep_frac,
        "model.n_layers" => model.n_layers,
        "model.d_model" => model.d_model,
        "model.n_heads" => model.n_heads,
        "model.d_ff" => model.d_ff,
        "model.d_entity" => model.d_entity,
        "model.span_hidden" => model.span_hidden,
        "model.max_len" => model.max_len,
        "model.layer_norm_eps" => model.layer_norm_eps,
        "train.base_lr" => train.base_lr,
        "train.total_steps" => train.total_steps,
        "train.warmup_frac" => train.warmup_frac,
        "train.batch_size" => train.batch_size,
        "train.clip_norm" => train.clip_norm,
        "train.beta1" => train.beta1,
        "train.beta2" => train.beta2,
        "train.eps" => train.eps,
        "train.freeze_entity_embeddings" => train.freeze_entity_embeddings,
        "train.link_weight" => train.link_weight,
        "train.bio_weight" => train.bio_weight,
        "train.log_every" => train.log_every,
        "train.checkpoint_every" => train.checkpoint_every,
        "train.cv_folds" => train.cv_folds,
        "train.cv_lrs" => train.cv_lrs,
        "chunk.chunk_chars" => chunk.chunk_chars,
        "chunk.max_len" => chunk.max_len,
        "data.context_mode" => data.context_mode,
        "data.window_bytes" => data.window_bytes,
        "data.min_count" => data.min_count,
        "finetune.mode" => finetune_mode,
        "eval.mode" => eval_mode,
    }

    /// Sets one dotted key; unknown keys and unparsable values are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.set_known(key, value.trim()) {
            Some(Ok(())) => Ok(()),
            Some(Err(e)) => Err(Error::Config(format!("bad value {value:?} for {key}: {e}"))),
            None => Err(Error::Config(format!("unknown config key {key:?}"))),
        }
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_str(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_str_config(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_str(text, Path::new("<string>"))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::default();
        c.apply_str(&text, path)?;
        Ok(c)
    }

    /// The resolved configuration in the same `key = value` format.
    pub fn echo(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn candidate_config(&self) -> CandidateConfig {
        CandidateConfig { rng_seed: seed::derive(self.seed, &[stream::CANDIDATES]), ..self.candidates }
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig { rng_seed: seed::derive(self.seed, &[stream::NOISE]), ..self.noise }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { rng_seed: seed::derive(self.seed, &[stream::BATCH]), ..self.train.clone() }
    }

    pub fn init_seed(&self) -> u64 {
        seed::derive(self.seed, &[stream::INIT])
    }

    pub fn folds_seed(&self) -> u64 {
        seed::derive(self.seed, &[stream::FOLDS])
    }

    /// Model shape with vocabulary sizes filled in.
    pub fn model_config(&self, vocab_size: usize, n_entities: usize, pad_id: usize) -> ModelConfig {
        ModelConfig { vocab_size, n_entities, pad_id, ..self.model.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let c = RunConfig::from_str_config(
            "# run\nseed = 9\nnoise.enabled=false  # ablation\n\ntrain.cv_lrs = 1e-5, 3e-5\nmodel.span_hidden = 128\npaths.corpus = a b.jsonl\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert!(!c.noise.enabled);
        assert_eq!(c.train.cv_lrs, vec![1e-5, 3e-5]);
        assert_eq!(c.model.span_hidden, Some(128));
        assert_eq!(c.paths.corpus.as_deref(), Some(Path::new("a b.jsonl")));
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        let mut c = RunConfig::default();
        assert!(c.set("train.nope", "1").is_err());
        assert!(c.set("train.total_steps", "many").is_err());
        assert!(c.set("eval.mode", "both").is_err());
        let err = RunConfig::from_str_config("seed = 1\njust words\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn echo_roundtrips() {
        let mut c = RunConfig::default();
        c.set("candidates.max_page", "0").unwrap();
        c.set("train.freeze_entity_embeddings", "true").unwrap();
        c.set("data.context_mode", "title").unwrap();
        c.set("finetune.mode", "all_entities").unwrap();
        c.set("paths.log", "run/log.tsv").unwrap();
        assert_eq!(RunConfig::from_str_config(&c.echo()).unwrap(), c);
    }

    #[test]
    fn seeds_fan_out() {
        let c = RunConfig { seed: 3, ..Default::default() };
        let s = [c.candidate_config().rng_seed, c.noise_config().rng_seed, c.train_config().rng_seed, c.init_seed(), c.folds_seed()];
        for i in 0..s.len() {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
        let d = RunConfig { seed: 4, ..Default::default() };
        assert_ne!(c.init_seed(), d.init_seed());
    }
}
