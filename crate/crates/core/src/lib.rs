//! Counterfactual explanations for common model families.
//!
//! A counterfactual of `x` is the closest `x'` (under a regularizer) for
//! which the model produces a requested prediction. Linear models lead to
//! linear or quadratic programs, quadratic discriminants and local-metric
//! LVQ to difference-of-convex programs, trees to path enumeration; anything
//! else falls back to a derivative-free search.

pub mod blackbox;
pub mod engine;
pub mod error;
pub mod models;
pub mod numerics;
pub mod regularizers;
pub mod solvers;
pub mod trees;

pub use engine::{
    build_constraints, compute_blackbox, compute_counterfactual, CounterfactualQuery, CounterfactualReport,
    Method,
};
pub use error::{Error, Result};
pub use models::{load_model, Label, ModelSpec, Prediction};
pub use regularizers::{mad_weights, Regularizer};
