//! Numerical laboratory for tangent-kernel behaviour of contrastive models.
//!
//! The crate implements width-M two-layer (optionally deeper) networks in
//! the 1/sqrt(M) parameterization, contrastive losses built on dot-product
//! and cosine similarity, empirical tangent kernels and their drift metrics,
//! kernel-space training dynamics, Grassmannian-constrained trainers, the
//! feature-matrix / PCA pipeline that links trained models to trace
//! maximization, closed-form drift bounds, and the datasets plus evaluation
//! probes used by the experiment driver.

pub mod bounds;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod ntk;
pub mod numerics;
pub mod pca;
pub mod similarity;
pub mod training;

pub use error::{Error, Result};
