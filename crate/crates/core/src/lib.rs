//! Directed-information causality measures for multivariate time series.
//!
//! The crate estimates conditional transfer entropy and instantaneous
//! information exchange with k-nearest-neighbor estimators, computes the same
//! quantities exactly for linear Gaussian VAR(1) models, and assembles mixed
//! causality graphs (directed dynamical edges plus undirected instantaneous
//! edges) from permutation tests.
//!
//! Module map:
//!
//! * [`series`]: sample matrices, CSV ingestion, lag embedding into point clouds.
//! * [`neighbors`]: metrics and an exact kd-tree for k-NN and radius counts.
//! * [`estimators`]: Leonenko entropy, KSG mutual information, Frenzel-Pompe CMI.
//! * [`gaussian_oracle`]: closed-form values for Gaussian VAR(1) models.
//! * [`measures`]: the measure battery evaluated on data.
//! * [`inference`]: surrogate tests and causality-graph assembly.
//! * [`synth`]: generators for the chain and four-channel systems and VAR(1) data.

// `!(x < y)` is used on purpose where NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod gaussian_oracle;
pub mod inference;
pub mod measures;
pub mod neighbors;
pub mod series;
pub mod synth;

mod numeric;

pub use error::{Error, Result};
pub use estimators::{CmiMode, Estimate, EstimatorConfig};
pub use gaussian_oracle::{GaussianVarModel, JointCovariance};
pub use inference::{CausalityGraph, InstantMode, PairTestResult, SurrogatePolicy};
pub use measures::{MeasureKind, MeasureSpec, MeasureValue};
pub use neighbors::{CountMode, Metric, NeighborIndex, PointSet};
pub use series::{BlockLabel, LagSpec, PointCloud, SampleMatrix, SideHorizon};
