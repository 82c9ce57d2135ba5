//! Adaptive h-refinement for POD-Galerkin reduced-order models.
//!
//! A reduced basis is split online along a per-vector tree of dof subsets.
//! Dual-weighted residual indicators decide which vectors to split, and the
//! basis is periodically reset to its offline form.

// NaN-rejecting checks are written as negated comparisons on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod dwr;
pub mod error;
pub mod fom;
pub mod harness;
pub mod kernels;
pub mod kmeans;
pub mod rom;
pub mod splitting;
pub mod tree;

pub use adapt::{adapt_step, AdaptConfig, AdaptLog, AdaptStats, RefineVariant};
pub use error::{Error, Result};
pub use fom::{solve_fom, BurgersConfig, BurgersProblem, FomProblem, LinearProblem};
pub use rom::{build_pod, PodBasis};
pub use splitting::RefinedBasis;
pub use tree::{build_tree, SplitTree};
