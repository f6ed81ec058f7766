//! Feature attribution for black-box models.
//!
//! The crate explains a single prediction by perturbing the instance with
//! fixed-ratio masks, scoring every perturbation with the model, fitting a
//! bagged regression-tree surrogate to the weighted design and attributing the
//! surrogate with Shapley-style scores that account for feature similarity.
//!
//! Layout:
//!
//! - [`coalition`]: coalitions, value functions and the four attribution rules
//!   (exact Shapley, permutation Shapley, decoupled and permutation-form
//!   similarity-adjusted scores).
//! - [`perturbation`]: mask generation, similarity weights, the weighted
//!   design and the mask-variance study.
//! - [`forest`]: the bootstrap tree ensemble used as surrogate.
//! - [`blackbox`]: builtin reference models and the line-delimited JSON
//!   protocol for external models.
//! - [`adapters`]: tabular, text and image instances, segment maps, overlays.
//! - [`evaluation`]: expert-consistency scores, Kendall's tau, Jaccard, R².
//! - [`pipeline`]: end-to-end explanation runs and the studies built on them.

pub mod adapters;
pub mod blackbox;
pub mod coalition;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod perturbation;
pub mod pipeline;
mod rng;

pub use coalition::{
    Attribution, Coalition, FeatureSet, Method, PermutationMode, SimilarityMatrix, TableGame,
    ValueFunction,
};
pub use error::{Error, Result};
pub use forest::{EnsembleForest, FitReport, ForestParams};
pub use perturbation::{Mask, MaskPolicy, PerturbationSet, VarianceReport};
pub use pipeline::{ImportanceReport, RunConfig};
