//! Content-popularity estimation from zero-censored request traces.
//!
//! An observer of a finite trace sees each document's request count, but
//! never the documents that drew zero requests. Treating the observed
//! counts as the model parameters (the "naive" route) both undercounts the
//! catalog and smears the popularity law. This crate solves the inverse
//! problem instead: fit a popularity mixing distribution by maximum
//! likelihood on the zero-truncated counts, estimate the unseen catalog
//! size, and feed the fitted model into cache analytics.
//!
//! The pieces:
//!
//! * [`trace`] — trace ingestion, count reduction, synthetic ground-truth
//!   generators (Pareto and degenerate popularity laws);
//! * [`mixture`] — mixed-Poisson pmfs, censoring, catalog estimation, and
//!   the incomplete-gamma machinery the Pareto family needs;
//! * [`estimators`] — naive, non-parametric ML (grid + simplex solver),
//!   penalized and peak-refit variants, parametric Pareto ML, and the
//!   log-log rank-frequency baseline;
//! * [`cache`] — characteristic times and stationary/transient LRU
//!   hit-ratio formulas, for explicit rates and for fitted mixings;
//! * [`sim`] — exact trace-driven LRU simulation and Poisson arrival
//!   generation, the ground truth the model is checked against;
//! * [`report`] — MARE and comparison reports.

// `!(x > 0.0)` rejects NaN along with the out-of-range values; the
// suggested `x <= 0.0` would accept NaN. Index loops in the solver kernels
// walk several parallel buffers at once.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cache;
pub mod error;
pub mod estimators;
pub mod gamma;
pub mod mixture;
pub mod numerics;
pub mod report;
pub mod rng;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use gamma::{ln_upper_incomplete_gamma, upper_incomplete_gamma};
pub use mixture::{
    catalog_size_estimate, censored_log_likelihood, quadrature_mixed_pmf, MixingDistribution,
};
