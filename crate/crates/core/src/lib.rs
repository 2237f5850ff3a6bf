//! Post-selection inference constants for linear regression.
//!
//! The PoSI constant `K(X, M, α, r)` is the `(1 − α)` quantile of the largest
//! absolute t-ratio over every coefficient of every submodel in a universe
//! `M`. Confidence intervals widened by `K` keep their family-wise coverage no
//! matter how the submodel was chosen from `M`.
//!
//! Indices are 0-based throughout the Rust API; [`design::ModelId`] prints
//! and serializes 1-based.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod engine;
pub mod error;
pub mod numeric;
pub mod inference;
pub mod rng;
pub mod special;
pub mod structure;

pub use design::{
    canonicalize, direction_stream, enumerate_models, load_design, CanonicalDesign, CanonicalForm,
    DedupMode, DesignMatrix, ModelId, ModelUniverse,
};
pub use engine::{
    asymptotic_cap_constant, cap_bonferroni_bound, orth_k, posi1_k, posi_k, scheffe_k, ConstantEstimate,
    ErrorModel, McConfig, Method,
};
pub use error::{PosiError, Result};
