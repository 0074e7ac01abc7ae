//! Fairness-regularized graph neural networks for semi-supervised binary
//! node classification with partially observed sensitive attributes.
//!
//! The crate trains GCN and GraphSAGE encoders with two differentiable
//! fairness regularizers added to the cross-entropy objective: a
//! statistical-parity term (gap between mean predicted probabilities of the
//! sensitive groups) and an equal-opportunity term (the same gap restricted
//! to positively labeled nodes). Both use only the labeled training set, so
//! sensitive attributes are never required on unlabeled nodes.
//!
//! Everything runs on a small reverse-mode tape over dense f64 matrices
//! ([`tape`]), checked against a finite-difference oracle ([`gradcheck`]).
//! Supporting subsystems: discrete fairness/classification metrics and the
//! hybrid model-selection score ([`metrics`]), a full-batch Adam training
//! loop with best-epoch restoration ([`train`]), a TPE-style sequential
//! search over the (alpha, beta) grid ([`hpo`]), a closed-form feasibility
//! analysis of combining both fairness criteria ([`feasibility`]), dataset
//! I/O and a synthetic biased-graph generator ([`data`]), and a CLI
//! ([`cli`]).
//!
//! See the crate examples for runnable walkthroughs of each capability.

pub mod cli;
pub mod data;
pub mod error;
pub mod feasibility;
pub mod gradcheck;
pub mod graph;
pub mod hpo;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
