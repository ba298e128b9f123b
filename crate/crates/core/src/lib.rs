//! Entity linking with a Transformer encoder: corpus construction,
//! candidate selection, input noising, training, alias tables and evaluation.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the command-line tool (`f32`)
//! and by gradient checks (`f64`).

pub mod aliastable;
pub mod candidates;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod noising;
pub mod scalar;
pub mod seed;
pub mod synthetic;
pub mod text;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig, Params};
pub use scalar::Scalar;

pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
pub type Params32 = Params<f32>;
pub type Params64 = Params<f64>;
