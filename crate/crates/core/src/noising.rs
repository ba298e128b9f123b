//! BERT-style input corruption.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::vocab::TokenVocab;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub select_rate: f64,
    pub mask_frac: f64,
    pub random_frac: f64,
    pub keep_frac: f64,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            select_rate: 0.15,
            mask_frac: 0.8,
            random_frac: 0.1,
            keep_frac: 0.1,
            rng_seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.mask_frac, self.random_frac, self.keep_frac];
        if !(0.0..=1.0).contains(&self.select_rate) || fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("noise probabilities must lie in [0, 1]".into()));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("noise mask/random/keep fractions must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseAction {
    Untouched,
    Masked,
    Replaced,
    Kept,
}

impl NoiseAction {
    pub fn selected(self) -> bool {
        self != NoiseAction::Untouched
    }
}

/// Corrupts `tokens`; returns the noised sequence and the per-position action.
/// Padding is never selected. Uses `cfg.rng_seed` regardless of `cfg.enabled`.
pub fn apply_noise(
    tokens: &[usize],
    cfg: &NoiseConfig,
    vocab: &TokenVocab,
) -> Result<(Vec<usize>, Vec<NoiseAction>)> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.rng_seed, &[]);
    let regular = vocab.regular_ids();
    let mut out = tokens.to_vec();
    let mut actions = vec![NoiseAction::Untouched; tokens.len()];
    for (tok, act) in out.iter_mut().zip(actions.iter_mut()) {
        if *tok == vocab.pad || !rng.gen_bool(cfg.select_rate) {
            continue;
        }
        let u: f64 = rng.gen();
        *act = if u < cfg.mask_frac {
            *tok = vocab.mask;
            NoiseAction::Masked
        } else if u < cfg.mask_frac + cfg.random_frac && !regular.is_empty() {
            *tok = regular[rng.gen_range(0..regular.len())];
            NoiseAction::Replaced
        } else {
            NoiseAction::Kept
        };
    }
    Ok((out, actions))
}
