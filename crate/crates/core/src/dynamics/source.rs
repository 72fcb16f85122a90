use std::sync::Arc;

use super::{
    ddim_step, reverse_step_with_eps, LinearSystem, ReverseSampler, StiffTestProblem, ToyDenoiser,
};
use crate::error::{FocaError, Result};
use crate::types::{FeatureVector, TimeGrid};

/// A generator of feature trajectories, one feature per grid step.
#[derive(Debug, Clone)]
pub enum TrajectorySource {
    Linear(LinearSystem),
    Stiff(StiffTestProblem),
    /// Deterministic reverse sampler from the noise draw `x_init`; the feature
    /// is the network's first hidden activation.
    Denoiser {
        model: Arc<ToyDenoiser>,
        x_init: FeatureVector,
        sampler: ReverseSampler,
    },
}

impl TrajectorySource {
    pub fn name(&self) -> &'static str {
        match self {
            TrajectorySource::Linear(_) => "linear",
            TrajectorySource::Stiff(p) => p.name(),
            TrajectorySource::Denoiser { .. } => "denoiser",
        }
    }
}

/// Mutable per-run state of a sampler.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerState {
    /// Analytic sources carry no state: every evaluation is exact.
    Analytic,
    Diffusion {
        x: FeatureVector,
    },
}

/// Step-by-step driver that lets a caller substitute the feature at any step.
#[derive(Debug)]
pub struct Sampler<'a> {
    source: &'a TrajectorySource,
    grid: TimeGrid,
    exact: Option<Vec<FeatureVector>>,
}

impl<'a> Sampler<'a> {
    pub fn new(source: &'a TrajectorySource, grid: TimeGrid) -> Result<Self> {
        let exact = match source {
            TrajectorySource::Linear(sys) => Some(
                (0..grid.steps())
                    .map(|s| sys.exact_solution(grid.time(s)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            TrajectorySource::Stiff(p) => {
                let mut v = p.trajectory(&grid)?;
                v.truncate(grid.steps());
                Some(v)
            }
            TrajectorySource::Denoiser { model, x_init, .. } => {
                if model.schedule().steps() != grid.steps() {
                    return Err(FocaError::Precondition(format!(
                        "grid has {} steps, denoiser schedule has {}",
                        grid.steps(),
                        model.schedule().steps()
                    )));
                }
                x_init.check_dim(&FeatureVector::zeros(2))?;
                None
            }
        };
        Ok(Self {
            source,
            grid,
            exact,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn start(&self) -> SamplerState {
        match self.source {
            TrajectorySource::Denoiser { x_init, .. } => {
                SamplerState::Diffusion { x: x_init.clone() }
            }
            _ => SamplerState::Analytic,
        }
    }

    /// Full computation of the feature at `step`.
    pub fn evaluate(&self, state: &SamplerState, step: usize) -> Result<FeatureVector> {
        match (self.source, state) {
            (TrajectorySource::Denoiser { model, .. }, SamplerState::Diffusion { x }) => {
                model.hidden1(x, self.grid.timestep(step)?)
            }
            (_, SamplerState::Analytic) => self
                .exact
                .as_ref()
                .and_then(|v| v.get(step).cloned())
                .ok_or(FocaError::OutOfRange {
                    what: "step index",
                    value: step as f64,
                    lo: 0.0,
                    hi: self.grid.steps() as f64 - 1.0,
                }),
            _ => Err(FocaError::Precondition(
                "sampler state does not match source".into(),
            )),
        }
    }

    /// Completes `step` using `feature` in place of the computed one.
    pub fn advance(
        &self,
        state: &mut SamplerState,
        step: usize,
        feature: &FeatureVector,
    ) -> Result<()> {
        if let (TrajectorySource::Denoiser { model, sampler, .. }, SamplerState::Diffusion { x }) =
            (self.source, &mut *state)
        {
            let t = self.grid.timestep(step)?;
            let eps = model.head(feature)?;
            *x = match sampler {
                ReverseSampler::Ddim => ddim_step(x, t, &eps, model.schedule())?,
                ReverseSampler::AncestralMean => {
                    let zero = FeatureVector::zeros(x.dim());
                    reverse_step_with_eps(x, t, &eps, model.schedule(), &zero)?
                }
            };
        }
        Ok(())
    }

    /// Final sample, for sources that produce one.
    pub fn output(&self, state: &SamplerState) -> Option<FeatureVector> {
        match state {
            SamplerState::Diffusion { x } => Some(x.clone()),
            SamplerState::Analytic => None,
        }
    }

    /// Uncached run: every feature plus the final sample.
    pub fn run_uncached(&self) -> Result<(Vec<FeatureVector>, Option<FeatureVector>)> {
        let mut state = self.start();
        let mut out = Vec::with_capacity(self.grid.steps());
        for s in 0..self.grid.steps() {
            let f = self.evaluate(&state, s)?;
            self.advance(&mut state, s, &f)?;
            out.push(f);
        }
        Ok((out, self.output(&state)))
    }
}

/// Ground-truth feature at each of the grid's `steps` points.
pub fn true_feature_trajectory(
    source: &TrajectorySource,
    grid: &TimeGrid,
) -> Result<Vec<FeatureVector>> {
    Ok(Sampler::new(source, *grid)?.run_uncached()?.0)
}
