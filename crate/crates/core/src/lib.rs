//! Unbinned detector unfolding by iterative classifier reweighting.
//!
//! The core idea: instead of unfolding histograms, reweight a synthetic
//! (generator-level, detector-level) event sample until its detector level
//! matches observed data, alternating between a detector-level reweighting
//! step and a generator-level step that turns the pulled-back weights into a
//! proper function of the generator-level features. Background contamination
//! is removed up front by a positive-reweighting classifier, and events with
//! a missing generator- or detector-level record are handled by dedicated
//! imputation regressors. The final product is the synthetic generator-level
//! sample with per-event weights — an unbinned estimate of the truth
//! distribution that can be histogrammed with any binning after the fact.
//!
//! A classical binned Richardson-Lucy / iterative Bayesian unfolding baseline
//! lives in [`binned`]; with exact histogram-ratio reweighters the iterative
//! procedure reproduces it bin for bin, which doubles as a cross-check in the
//! test suite.
//!
//! Everything is deterministic given the seeds in the configs: toy data
//! generation, classifier training, and ensemble benchmarks (at any level of
//! parallelism).

pub mod binned;
pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod hist;
pub mod omnifold;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
