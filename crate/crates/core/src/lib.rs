//! A self-contained laboratory for post-hoc instance-level GNN explanation.
//!
//! The crate trains small dense GCNs from scratch on synthetic benchmarks,
//! optimizes perturbation masks to explain individual predictions, and adds
//! an auxiliary embedding-alignment loss (direct, anchor-based, Gaussian
//! mixture, or MI-estimator based) to make those explanations faithful and
//! consistent. Evaluation covers edge AUROC, fidelity curves, and top-k SHD
//! consistency.

pub mod align;
pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
pub mod gnn;
pub mod graph;
pub mod runner;
pub mod tensor;

pub use error::{RalignError, Result};
