//! Transformer encoder, span/entity scoring, BIO tagging, losses and gradients.

pub mod bio;
pub mod checkpoint;
mod encoder;
mod heads;
mod loss;
pub mod ops;
mod params;
mod predict;

pub use encoder::HiddenStates;
pub use heads::Candidates;
pub use loss::{CandidateScope, Example, LossReport, LossWeights};
pub use params::{tensor_layout, Gradients, LayerParams, ModelConfig, Params, TensorMut, TensorRef, ENTITY_EMBEDDINGS};
pub use predict::{Disambiguation, LinkedSpan};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

impl<T: Scalar> Model<T> {
    /// Freshly initialized model; parameters depend only on `config` and `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, &mut seed::rng(seed, &[seed::stream::INIT]));
        Ok(Self { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}
