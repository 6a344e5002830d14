//! Dictionary learning and forecasting for nonnegative multivariate time
//! series via Hankel-tensor online NMF.
//!
//! The library learns a dictionary of short joint evolution patterns from a
//! panel of nonnegative series (entities x case types over days). Each
//! learning step embeds recent history into a Hankel tensor, sparse-codes the
//! windows against the current dictionary, folds the codes into recursively
//! discounted aggregate statistics, and refits the dictionary against those
//! aggregates. Partial fitting of the leading rows of each atom against the
//! most recent observations yields one-step predictions, which can be fed
//! back recursively to extrapolate into the future.
//!
//! # Pipeline
//!
//! ```text
//! cumulative CSVs -> daily new cases -> moving average -> log(x+1)
//!     -> minibatch dictionary init -> online learning + one-step prediction
//!     -> recursive extrapolation -> ensemble mean/std -> inverse transform
//! ```
//!
//! The crate is organized around the stages above:
//!
//! - [`tensor`]: panel/tensor containers, the Hankel embedding, and the
//!   mode-3 unfolding convention shared by every solver.
//! - [`solver`]: nonnegative L1-penalized sparse coding and the constrained
//!   quadratic dictionary update.
//! - [`learner`]: online and minibatch dictionary learning with aggregate
//!   state recursion and per-atom importance tracking.
//! - [`predictor`]: partial fitting, one-step prediction, recursive
//!   extrapolation, reconstruction, and the three-stage ensemble scheme.
//! - [`data`]: ingestion of cumulative case-count CSVs and the forward and
//!   inverse preprocessing transforms.
//! - [`checkpoint`]: versioned JSON model checkpoints.
//! - [`config`]: run configuration parsing and validation.
//! - [`export`]: tidy CSV emission for predictions, reconstructions, and
//!   importance tables.
//!
//! # Example
//!
//! ```
//! use ndarray::Array2;
//! use onmf_core::learner::{LearnerConfig, SolverTuning};
//! use onmf_core::predictor::{run_scheme, SchemeConfig};
//! use onmf_core::tensor::TimeSeriesPanel;
//!
//! // A small synthetic panel: two slowly varying nonnegative series.
//! let values = Array2::from_shape_fn((2, 30), |(i, t)| {
//!     1.0 + i as f64 + 0.3 * ((t as f64) * 0.4).sin().abs()
//! });
//! let panel = TimeSeriesPanel::synthetic(values).unwrap();
//!
//! let cfg = SchemeConfig {
//!     learner: LearnerConfig {
//!         memory_size: 20,
//!         segment_length: 4,
//!         num_atoms: 3,
//!         lambda: 0.1,
//!         beta: 1.0,
//!         minibatch_iterations: 10,
//!         seed: 7,
//!     },
//!     online_beta: 2.0,
//!     lambda_prime: 0.0,
//!     horizon: 5,
//!     n_trials: 2,
//!     strict_causal: false,
//! };
//! let out = run_scheme(&panel, &cfg, &SolverTuning::default()).unwrap();
//! assert_eq!(out.ensemble.mean.dim(), (2, 5));
//! assert!(out.ensemble.mean.iter().all(|v| v.is_finite() && *v >= 0.0));
//! ```
#![warn(missing_docs)]
#![deny(unsafe_code)]
// Validation guards are written `!(x > 0.0)` so NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod export;
pub mod learner;
pub mod predictor;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
