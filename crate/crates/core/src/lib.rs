//! Budget-aware per-instance algorithm selection (PIAS) for black-box
//! optimization.
//!
//! The pipeline runs a portfolio of optimizers on generated problem
//! instances, computes landscape features from a Sobol sample that is charged
//! against the evaluation budget, trains a multi-output regression forest to
//! pick an optimizer per instance, and scores the selector against single-best
//! and virtual-best baselines.

// Negated comparisons deliberately treat NaN as failing the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod features;
pub mod harness;
pub mod optimizers;
pub mod perfdb;
pub mod portfolio;
pub mod sampling;
pub mod seed;
pub mod selector;
pub mod suites;

pub use error::{Error, Result};
