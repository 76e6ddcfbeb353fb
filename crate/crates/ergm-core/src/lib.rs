//! Bayesian inference for exponential random graph models.
//!
//! The likelihood of an ERGM carries a normalizing constant that sums over
//! every graph on `n` nodes, so posterior sampling is doubly intractable.
//! This crate samples a tractable pseudo-posterior (the dyad-wise
//! pseudolikelihood times the prior) with a Metropolis–Hastings chain and
//! then corrects the draws through an affine map that aligns the mode and
//! curvature of the pseudo-posterior with those of the true posterior. The
//! approximate exchange algorithm and an exact-enumeration oracle for tiny
//! graphs are included as verification baselines.
//!
//! Modules follow the pipeline:
//!
//! - [`graph`]: undirected simple graphs with O(1) dyad toggles.
//! - [`statistics`]: sufficient statistics and change scores.
//! - [`pseudolikelihood`]: the logistic-regression form of the
//!   pseudolikelihood, the Gaussian prior, and mode/curvature estimation.
//! - [`samplers`]: the pseudo-posterior MH chain, the tie/no-tie graph
//!   sampler, and the approximate exchange baseline.
//! - [`calibration`]: Robbins–Monro MAP search, Monte Carlo curvature, and
//!   the affine correction of chains.
//! - [`diagnostics`]: ESS, efficiency ratios, total-variation distance,
//!   posterior summaries, and the posterior-predictive degeneracy check.
//! - [`oracle`]: exact enumeration of tiny graphs for test verification.

pub mod calibration;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod pseudolikelihood;
pub mod rng;
pub mod samplers;
pub mod statistics;

pub use error::{ErgmError, Result};
pub use graph::{Dyad, Graph};
pub use statistics::{ChangeStatMatrix, ModelSpec, StatisticTerm};
