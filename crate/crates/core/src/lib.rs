//! Hierarchical clustering of the hidden units of trained sigmoid networks.
//!
//! The pipeline trains a fully connected sigmoid network with L1-regularized
//! stochastic backpropagation ([`lnn`]), describes every hidden unit by its
//! correlations with the input and output dimensions ([`features`]), aligns
//! the signs of those feature vectors, and clusters the units with Ward's
//! method ([`clustering`]). The resulting dendrogram can be cut at any
//! resolution; each cluster's centroid is its role, i.e. a signed
//! input-output mapping.
//!
//! [`nnmf`] provides a non-negative matrix factorization clustering baseline,
//! [`data`] loads and normalizes the image and time-series datasets, and
//! [`report`] renders SVG views and runs the end-to-end pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod clustering;
pub mod data;
mod error;
pub mod features;
pub mod lnn;
pub mod nnmf;
pub mod report;
mod rng;

pub use clustering::{ClusterReport, Dendrogram, Merge, RoleMatrix};
pub use data::{Dataset, RawImageSet, TimeSeriesTable};
pub use error::{Error, Result};
pub use features::{AlignmentTrace, FeatureMatrix, UnitRef};
pub use lnn::{Network, OrderPolicy, TrainConfig};
pub use nnmf::NnmfResult;
