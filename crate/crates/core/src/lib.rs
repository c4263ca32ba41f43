//! Surrogate-model development pipeline for expensive simulation codes.
//!
//! The crate covers data preparation with labeled folds, from-scratch
//! multi-output random forest and multilayer perceptron regressors,
//! correlation/PCA feature reduction, nested cross-validation with
//! randomized hyperparameter search, and final hold-out evaluation.

pub mod dataset;
pub mod error;
pub mod featsel;
pub mod forest;
pub mod harness;
pub mod matrix;
pub mod mlp;
pub mod model;
pub mod persist;
pub mod seed;
pub mod tuning;

pub use error::{Error, Result};
pub use matrix::Matrix;
