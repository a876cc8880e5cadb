//! Causal decomposition of fairness-accuracy trade-offs.
//!
//! The crate trains causally constrained predictors for every subset of the
//! direct / indirect / spurious pathway effects, decomposes the total excess
//! loss over the subset lattice of constraint sets, and reports per-pathway
//! attributions (path-averaged and Shapley-equivalent), fairness/utility
//! ratios, and Pareto fronts with bootstrap uncertainty.
//!
//! Modules:
//! * [`data`] - datasets, standard-fairness-model column mapping, encoding,
//!   splits, bootstrap resampling;
//! * [`synth`] - synthetic SCM generators and exact oracles used as ground
//!   truth;
//! * [`estimators`] - inverse-propensity plug-in estimation of natural
//!   direct/indirect/spurious effects and TV measures;
//! * [`mlp`] - the feed-forward predictor and optimizer;
//! * [`learner`] - Lagrangian constrained training with a bisection search
//!   over the penalty weight, validated by out-of-sample hypothesis tests;
//! * [`lattice`] - subset-lattice attribution math (excess-loss and TV
//!   decompositions, Shapley values, fairness/utility ratios);
//! * [`pipeline`] - end-to-end bootstrap analysis runs and report emission.

pub mod data;
pub mod effects;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod learner;
pub mod mlp;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
