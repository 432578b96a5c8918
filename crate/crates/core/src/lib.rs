//! Heterogeneous-ensemble re-identification pipeline.
//!
//! Matches query images of a subject against a gallery of previously recorded
//! subjects by learning one siamese embedding per hand-crafted feature method
//! and fusing the resulting embedding spaces. The pipeline stages are:
//!
//! 1. **data** — manifest/synthetic dataset loading and subject-disjoint
//!    fold, query, and gallery splits.
//! 2. **features** — per-image feature extraction: patch statistics
//!    (brightness, average color, color variance), column quantiles, raw
//!    image tensors, and imported feature tables.
//! 3. **neural** — from-scratch dense and convolutional networks trained as
//!    siamese embeddings with triplet loss.
//! 4. **ensemble** — five fusion rules over per-model embeddings or rankings:
//!    z-score concatenation, stacked network, learned triplet weights,
//!    rank-1-searched weights, and median-rank voting.
//! 5. **eval** — rank-k retrieval accuracy, cross-validated experiment
//!    orchestration, uncertainty and correlation statistics, ablations.
//!
//! All embedding math is generic over the [`Scalar`] type (`f32` or `f64`);
//! the command-line pipeline and the reference configs run on [`Real`].

pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod neural;

mod scalar;
pub mod seeding;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used by the command-line pipeline and the reference configs.
pub type Real = f64;

/// [`features::FeatureVector`] over [`Real`].
pub type RealFeatureVector = features::FeatureVector<Real>;
/// [`neural::EmbeddingModel`] over [`Real`].
pub type RealEmbeddingModel = neural::EmbeddingModel<Real>;
/// [`ensemble::EnsembleTransform`] over [`Real`].
pub type RealEnsembleTransform = ensemble::EnsembleTransform<Real>;
