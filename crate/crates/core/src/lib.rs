//! Recursive neural networks over dependency parse trees for sentence-pair
//! semantic relatedness scoring and textual-entailment classification.
//!
//! The crate bundles four tree encoders (a typed-dependency composition
//! plus positional, per-relation, and single-matrix baselines), a siamese
//! pair head trained with a KL-divergence objective, a self-contained
//! reverse-mode autodiff engine, an AdaGrad trainer, and CoNLL-U/GloVe
//! ingestion.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the aliases at the crate root pin the double-precision
//! instantiation used by the CLI and the test suites.

pub mod autodiff;
pub mod data;
pub mod deptree;
pub mod embeddings;
pub mod encoders;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pairmodel;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

/// Double-precision tensor.
pub type Tensor = autodiff::Tensor<f64>;
/// Double-precision computation graph.
pub type Graph = autodiff::Graph<f64>;
/// Double-precision parameter store.
pub type ParamStore = autodiff::ParamStore<f64>;
/// Double-precision AdaGrad optimizer.
pub type AdaGrad = autodiff::AdaGrad<f64>;
/// Double-precision word-embedding table.
pub type WordEmbeddings = embeddings::WordEmbeddings<f64>;
/// Double-precision pair model.
pub type Model = model::Model<f64>;
/// Double-precision training outcome.
pub type TrainOutcome = trainer::TrainOutcome<f64>;
