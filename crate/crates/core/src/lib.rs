//! Ordered linear representations: encoder/decoder pairs trained under
//! prefix (Matryoshka), non-uniform ℓ2, monotone ℓ1 and Fisher objectives,
//! with exact PCA and LDA oracles to measure how well each objective pins
//! down individual axes rather than just a subspace.
//!
//! Data matrices are column-per-sample (`p×n`) throughout.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod oracles;
pub mod rng;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
