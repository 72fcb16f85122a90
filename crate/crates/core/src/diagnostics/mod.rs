//! Error metrics, integrator diagnostics and the contraction-bound check.

mod horizon;
mod metrics;
mod mmd;
mod prop1;

pub use horizon::{multi_horizon_forecast_error, HorizonCurve};
pub use metrics::{
    fill_trajectory_diagnostics, local_truncation_error, relative_error, stiffness_index,
    trajectory_diagnostics, RelativeError, StiffnessIndex, DEFAULT_STIFFNESS_WINDOW,
    DEGENERATE_NORM, ERROR_FLOOR,
};
pub use mmd::{median_bandwidth, mmd_sample_quality, mmd_with_bandwidth};
pub use prop1::{verify_proposition1, BoundReport, DEFAULT_SLACK};

use serde::Serialize;

use crate::predictors::PredictorKind;
use crate::types::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub is_full: bool,
    /// Absent on full steps.
    pub predicted: Option<FeatureVector>,
    /// Feature that drove the step: the full evaluation on the cached
    /// trajectory, or the prediction.
    pub used: FeatureVector,
    pub truth: FeatureVector,
    /// Zero on full steps; absolute error when `degenerate_truth`.
    pub rel_error: f64,
    pub degenerate_truth: bool,
    pub lte: f64,
    pub stiffness_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub kind: PredictorKind,
    /// One per step.
    pub records: Vec<StepRecord>,
    pub evaluation_count: usize,
    pub acceleration_ratio: f64,
    /// `‖x₀ cached − x₀ uncached‖₂` for sources that produce a sample.
    pub terminal_sample_deviation: Option<f64>,
    pub mmd_to_data: Option<f64>,
    /// Skipped steps where BDF2 history was too short and a first-order
    /// forecast was used instead.
    pub fallback_steps: Vec<usize>,
    pub final_sample: Option<FeatureVector>,
}

impl RunReport {
    pub fn max_rel_error(&self) -> f64 {
        self.records.iter().map(|r| r.rel_error).fold(0.0, f64::max)
    }
}
