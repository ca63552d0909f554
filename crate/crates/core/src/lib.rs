//! Ensemble sparse models.
//!
//! Data are approximated as a weighted combination of the approximations
//! produced by several *weak* sparse models, each one a dictionary paired
//! with an l1-penalized (or 1-sparse) coder. This crate holds the numerical
//! core: the lasso coder, weak dictionary builders, ensemble trainers and
//! weight solvers, the image-restoration pipelines and the sparse-graph
//! spectral clustering.
//!
//! The crate is `no_std` (it needs `alloc`). Enable `std` for the standard
//! library integrations of the dependencies and `parallel` to code batches of
//! samples with rayon.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod clustering;
pub mod dictionaries;
pub mod ensemble;
mod error;
pub mod linalg;
mod math;
pub mod operator;
mod par;
pub mod restoration;
pub mod rng;
pub mod sparse_coding;

pub use dictionaries::{AtomSource, ClusterState, Dictionary, TrainingSet};
pub use ensemble::{ConstraintCase, EnsembleModel, ModelKind, MultilevelModel, WeightVector};
pub use error::{Error, Result};
pub use operator::{DegradationOperator, OperatorDescriptor, OperatorKind};
pub use restoration::ImagePlane;
pub use sparse_coding::{CodingProblem, LassoConfig, LassoSolver, Penalty, SparseCode};

pub use nalgebra::{DMatrix, DVector};
