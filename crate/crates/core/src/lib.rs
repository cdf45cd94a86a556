//! Toy laboratory for word-substitution attacks on a small differentiable
//! sentence-pair classifier.
//!
//! The crate covers the full loop: synthetic oracle-labeled data, synonym
//! and antonym substitution tables, a mean-pool encoder with exact
//! gradients, greedy substitution attacks, four training regimes (plain
//! cross-entropy, randomized synonym smoothing, and two contrastive
//! regimes that pull synonym variants together while pushing antonym
//! variants apart), and evaluation utilities.
//!
//! All numeric code is generic over [`scalar::Scalar`]; the `*64`/`*32`
//! aliases below fix the scalar type for callers that do not care.

pub mod attack;
pub mod classifier;
pub mod data;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod model;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision vocabulary.
pub type Vocabulary64 = lexicon::Vocabulary<f64>;
/// Single-precision vocabulary.
pub type Vocabulary32 = lexicon::Vocabulary<f32>;
/// Double-precision model parameters.
pub type ModelParams64 = model::ModelParams<f64>;
/// Single-precision model parameters.
pub type ModelParams32 = model::ModelParams<f32>;
/// Double-precision generated toy world.
pub type ToyWorld64 = data::ToyWorld<f64>;
/// Double-precision training configuration.
pub type TrainConfig64 = training::TrainConfig<f64>;
