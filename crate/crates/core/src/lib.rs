//! Continuous-time boosting engine.
//!
//! The AdaBoost flow is a controlled ODE on ensembles × probability weights.
//! Discrete AdaBoost, arc-gv, confidence-rated prediction, SuperBoost and the
//! foliation-based geometric algorithm are all obtained from it by choosing a
//! control policy ([`controls`]). Independent discrete implementations live in
//! [`discrete`]; [`geometry`] holds the gradient-flow view and the logistic
//! (LogitBoost) flow.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controls;
pub mod dataset;
pub mod discrete;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod instances;
pub mod model;
pub mod numeric;
pub mod selftest;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use model::{Ensemble, EnsembleTerm, HypId, HypothesisKind, TrainingSet, WeakHypothesis, WeightMeasure};
