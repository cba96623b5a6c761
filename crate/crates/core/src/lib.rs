//! Amortized Bayesian clustering for finite Gaussian mixtures.
//!
//! A transformer trained purely on datasets drawn from a Bayesian GMM prior
//! predicts, in one forward pass, the posterior over the number of clusters
//! and per-point responsibilities. The crate also ships the baselines it is
//! measured against (mean-field VI, EM with AIC/BIC/silhouette selection,
//! K-means++) and the evaluation harness used by the `cpfn` CLI.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod par;
pub mod posterior;
pub mod prior;
pub mod train;
pub mod vi;

pub use error::{Error, Result};
