//! Streaming subspace learning and online matrix completion from partially
//! observed data.
//!
//! The crate provides two inference engines over one hierarchical Gaussian
//! model with shared column scales (rank pruning) and optional per-element
//! scales (sparse subspaces): a batch variational engine over a fixed window
//! ([`batch`]) and a constant-memory streaming tracker ([`online`]) driven
//! by exponentially weighted recursive statistics. Around them sit the
//! domain types ([`model`]), closed-form distribution moments and SPD
//! solves ([`bayes`]), a synthetic scenario generator ([`datagen`]), and
//! evaluation metrics ([`metrics`]).

pub mod batch;
pub mod bayes;
pub mod datagen;
pub mod metrics;
pub mod model;
pub mod online;
