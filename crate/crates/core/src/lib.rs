//! Low-rank operators in kernel feature spaces and the quantum-probability
//! quantities built on them.
//!
//! Operators are stored as `X·Y·diag(D)·Y†·X†` where `X` is a list of
//! pre-images mapped through a kernel ([`FeatureMatrix`]). All computations
//! go through Gram matrices, so feature vectors are never materialized.

#![no_std]

extern crate alloc;

pub mod builder;
pub mod coneqp;
pub mod error;
pub mod feature;
pub mod linalg;
pub mod operator;
pub mod reduction;

pub use builder::{accumulator_build, BuilderConfig, IncrementalState, UpdateTerm};
pub use error::{Error, Result};
pub use feature::{FeatureMatrix, KernelSpec};
pub use linalg::Matrix;
pub use operator::{Density, Divergence, Event, EventKind, KernelOperator};
pub use reduction::{
    nullspace_reduce, qp_reduce, reduce_to_budget, removal_scores, remove_unused, select_lambda, QpReductionParams, ReductionMethod,
    ReductionReport, RowWeighting, DEFAULT_PIVOT_THRESHOLD,
};
