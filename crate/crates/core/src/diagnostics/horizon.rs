use serde::Serialize;

use super::relative_error;
use crate::dynamics::{Sampler, TrajectorySource};
use crate::error::{FocaError, Result};
use crate::predictors::{predict, PredictorKind};
use crate::types::{CacheState, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonCurve {
    pub kind: PredictorKind,
    /// First forecast step; every earlier step is fully computed.
    pub start: usize,
    /// Relative error at `start, start + 1, …`.
    pub errors: Vec<f64>,
}

impl HorizonCurve {
    pub fn final_error(&self) -> Option<f64> {
        self.errors.last().copied()
    }
}

/// For each start step and kind: full computation before `start`, then
/// `horizon` consecutive forecasts whose output drives the sampler.
pub fn multi_horizon_forecast_error(
    source: &TrajectorySource,
    grid: &TimeGrid,
    start_steps: &[usize],
    horizon: usize,
    kinds: &[PredictorKind],
) -> Result<Vec<HorizonCurve>> {
    let sampler = Sampler::new(source, *grid)?;
    let (truth, _) = sampler.run_uncached()?;
    let mut out = Vec::with_capacity(start_steps.len() * kinds.len());
    for &start in start_steps {
        if start + horizon > grid.steps() || start == 0 {
            return Err(FocaError::OutOfRange {
                what: "forecast start",
                value: start as f64,
                lo: 1.0,
                hi: (grid.steps() - horizon) as f64,
            });
        }
        for &kind in kinds {
            let mut cache = CacheState::new(grid.h(), kind.taylor_order().unwrap_or(0));
            let mut state = sampler.start();
            for s in 0..start {
                let f = sampler.evaluate(&state, s)?;
                cache.record_full(s, f.clone())?;
                sampler.advance(&mut state, s, &f)?;
            }
            let mut errors = Vec::with_capacity(horizon);
            for s in start..start + horizon {
                let (p, _) = predict(kind, &cache, s, grid.h())?;
                errors.push(relative_error(&p, &truth[s])?.reported());
                sampler.advance(&mut state, s, &p)?;
                cache.record_predicted(s, p)?;
            }
            out.push(HorizonCurve {
                kind,
                start,
                errors,
            });
        }
    }
    Ok(out)
}
