//! Feature caching for diffusion sampling, treated as integrating the ODE
//! that hidden features follow across denoising steps.
//!
//! Skipped steps are filled by a forecaster ([`predictors::PredictorKind`]):
//! plain reuse, a Taylor expansion over finite differences, an explicit BDF2
//! predictor, or BDF2 followed by a Heun correction against the latest full
//! computation. [`dynamics`] provides the trajectories (analytic linear
//! systems, stiff test problems and a small trained denoiser),
//! [`diagnostics`] the error metrics, and [`harness`] the experiment driver
//! behind the `foca` binary.

// `!(x < y)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod predictors;
pub mod rng;
pub mod types;

pub use error::{FocaError, Result};
pub use types::{CacheSchedule, CacheState, FeatureVector, Stamped, TimeGrid, DEFAULT_WARMUP};
