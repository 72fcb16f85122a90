//! Shared numeric state, time discretization and cache bookkeeping.
//!
//! Step indices used throughout the crate count forward from the start of
//! sampling (`0` is the first, noisiest step). Diffusion timesteps count the
//! other way; [`TimeGrid::timestep`] and [`TimeGrid::step_index`] are the only
//! places that translate between the two.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FocaError, Result};

/// Default number of leading full-compute steps. Two points are the minimum
/// history a two-step forecaster needs.
pub const DEFAULT_WARMUP: usize = 2;

/// A flat, finite feature state.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(FocaError::Precondition(
                "feature vectors must have positive dimension".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FocaError::NonFinite(format!(
                "feature component {i} ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "feature vectors must have positive dimension");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(FocaError::DimMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    /// `Σ cᵢ·vᵢ`, accumulated term by term in the given order.
    pub fn linear_combination(terms: &[(f64, &FeatureVector)]) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| FocaError::Precondition("linear combination of zero terms".into()))?;
        let mut out = vec![0.0; first.dim()];
        for (c, v) in terms {
            first.check_dim(v)?;
            for (o, x) in out.iter_mut().zip(&v.0) {
                *o += c * x;
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::linear_combination(&[(1.0, self), (-1.0, other)])
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| c * v).collect())
    }
}

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = FocaError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// Uniform reverse-time grid with `steps` evaluations of step size `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    steps: usize,
    h: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, h: f64) -> Result<Self> {
        if steps == 0 {
            return Err(FocaError::Precondition(
                "time grid needs at least one step".into(),
            ));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(FocaError::Precondition(format!(
                "step size must be positive, got {h}"
            )));
        }
        Ok(Self { steps, h })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Diffusion timestep evaluated at `step_index`: `T` for the first step,
    /// `1` for the last.
    pub fn timestep(&self, step_index: usize) -> Result<usize> {
        self.check_step(step_index)?;
        Ok(self.steps - step_index)
    }

    /// Inverse of [`TimeGrid::timestep`].
    pub fn step_index(&self, timestep: usize) -> Result<usize> {
        if timestep == 0 || timestep > self.steps {
            return Err(FocaError::OutOfRange {
                what: "timestep",
                value: timestep as f64,
                lo: 1.0,
                hi: self.steps as f64,
            });
        }
        Ok(self.steps - timestep)
    }

    /// Forward time of a step, used by analytic sources.
    pub fn time(&self, step_index: usize) -> f64 {
        step_index as f64 * self.h
    }

    /// Timestep indices `T, T-1, ..., 0` of the states visited by a sampler.
    pub fn timesteps(&self) -> impl Iterator<Item = usize> {
        (0..=self.steps).rev()
    }

    fn check_step(&self, step_index: usize) -> Result<()> {
        if step_index >= self.steps {
            return Err(FocaError::OutOfRange {
                what: "step index",
                value: step_index as f64,
                lo: 0.0,
                hi: (self.steps - 1) as f64,
            });
        }
        Ok(())
    }
}

/// Full-compute / skip pattern with interval `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheSchedule {
    interval: usize,
    total_steps: usize,
    warmup_steps: usize,
}

impl CacheSchedule {
    pub fn new(interval: usize, total_steps: usize, warmup_steps: usize) -> Result<Self> {
        if interval == 0 {
            return Err(FocaError::config(
                "schedule.interval",
                "must be a positive integer",
            ));
        }
        if total_steps == 0 {
            return Err(FocaError::config(
                "schedule.total_steps",
                "must be a positive integer",
            ));
        }
        Ok(Self {
            interval,
            total_steps,
            warmup_steps,
        })
    }

    pub fn with_default_warmup(interval: usize, total_steps: usize) -> Result<Self> {
        Self::new(interval, total_steps, DEFAULT_WARMUP)
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_steps
    }

    pub fn is_full_step(&self, step_index: usize) -> Result<bool> {
        if step_index >= self.total_steps {
            return Err(FocaError::OutOfRange {
                what: "step index",
                value: step_index as f64,
                lo: 0.0,
                hi: (self.total_steps - 1) as f64,
            });
        }
        Ok(step_index < self.warmup_steps
            || (step_index - self.warmup_steps).is_multiple_of(self.interval))
    }

    /// Number of full evaluations: `warmup + ceil((total - warmup) / N)`.
    pub fn evaluation_count(&self) -> usize {
        if self.warmup_steps >= self.total_steps {
            return self.total_steps;
        }
        self.warmup_steps + (self.total_steps - self.warmup_steps).div_ceil(self.interval)
    }

    pub fn acceleration_ratio(&self) -> f64 {
        self.total_steps as f64 / self.evaluation_count() as f64
    }
}

/// A feature tagged with the step it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamped {
    pub step: usize,
    pub feature: FeatureVector,
}

/// Rolling history consumed by the predictors.
///
/// `recent` holds the two newest features regardless of origin (full or
/// predicted). `taylor_history` and the full-step slope only ever see
/// fully computed features.
#[derive(Debug, Clone)]
pub struct CacheState {
    h: f64,
    last_full: Option<Stamped>,
    full_slope: Option<FeatureVector>,
    recent: VecDeque<Stamped>,
    last_derivative: Option<FeatureVector>,
    taylor_history: VecDeque<Stamped>,
    taylor_capacity: usize,
}

impl CacheState {
    /// Empty cache on a grid of step size `h`, keeping up to `taylor_order + 1`
    /// full computations for finite differences.
    pub fn new(h: f64, taylor_order: usize) -> Self {
        Self {
            h,
            last_full: None,
            full_slope: None,
            recent: VecDeque::with_capacity(2),
            last_derivative: None,
            taylor_history: VecDeque::with_capacity(taylor_order + 1),
            taylor_capacity: taylor_order + 1,
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn last_full(&self) -> Option<&Stamped> {
        self.last_full.as_ref()
    }

    /// Slope at the latest full computation, from the last two full
    /// computations over their actual spacing.
    pub fn full_slope(&self) -> Option<&FeatureVector> {
        self.full_slope.as_ref()
    }

    pub fn recent(&self) -> &VecDeque<Stamped> {
        &self.recent
    }

    pub fn last_derivative(&self) -> Option<&FeatureVector> {
        self.last_derivative.as_ref()
    }

    pub fn taylor_history(&self) -> &VecDeque<Stamped> {
        &self.taylor_history
    }

    pub fn taylor_capacity(&self) -> usize {
        self.taylor_capacity
    }

    /// Store a fully computed feature.
    pub fn record_full(&mut self, step: usize, feature: FeatureVector) -> Result<()> {
        self.check_order(step)?;
        if let Some(prev) = &self.last_full {
            let span = (step - prev.step) as f64 * self.h;
            let slope = feature.sub(&prev.feature)?.scale(1.0 / span)?;
            self.full_slope = Some(slope);
        }
        self.last_full = Some(Stamped {
            step,
            feature: feature.clone(),
        });
        if self.taylor_history.len() == self.taylor_capacity {
            self.taylor_history.pop_front();
        }
        self.taylor_history.push_back(Stamped {
            step,
            feature: feature.clone(),
        });
        self.push_recent(step, feature)
    }

    /// Store a predicted feature. Only `recent` (and its derivative) change.
    pub fn record_predicted(&mut self, step: usize, feature: FeatureVector) -> Result<()> {
        self.check_order(step)?;
        if self.last_full.is_none() {
            return Err(FocaError::MissingHistory(
                "prediction recorded before any full step",
            ));
        }
        self.push_recent(step, feature)
    }

    fn push_recent(&mut self, step: usize, feature: FeatureVector) -> Result<()> {
        if self.recent.len() == 2 {
            self.recent.pop_front();
        }
        self.recent.push_back(Stamped { step, feature });
        self.last_derivative = if self.recent.len() == 2 {
            let (a, b) = (&self.recent[0], &self.recent[1]);
            let span = (b.step - a.step) as f64 * self.h;
            Some(b.feature.sub(&a.feature)?.scale(1.0 / span)?)
        } else {
            None
        };
        Ok(())
    }

    fn check_order(&self, step: usize) -> Result<()> {
        if let Some(last) = self.recent.back() {
            if step <= last.step {
                return Err(FocaError::Precondition(format!(
                    "cache steps must increase: {step} after {}",
                    last.step
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::from_slice(v).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![f64::INFINITY]).is_err());
        assert!(FeatureVector::new(vec![]).is_err());
        assert!(fv(&[1e308]).scale(10.0).is_err());
    }

    #[test]
    fn dim_mismatch_is_reported() {
        let err = fv(&[1.0]).sub(&fv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(
            err,
            FocaError::DimMismatch {
                expected: 1,
                got: 2
            }
        ));
    }

    #[test]
    fn full_step_examples() {
        let every = CacheSchedule::new(1, 10, 0).unwrap();
        assert!(every.is_full_step(7).unwrap());

        let s = CacheSchedule::new(5, 12, 2).unwrap();
        let full: Vec<usize> = (0..8).filter(|&i| s.is_full_step(i).unwrap()).collect();
        assert_eq!(full, vec![0, 1, 2, 7]);

        let s = CacheSchedule::new(3, 10, 0).unwrap();
        assert!(!s.is_full_step(4).unwrap());
        assert!(s.is_full_step(10).is_err());
    }

    #[test]
    fn evaluation_count_examples() {
        let s = CacheSchedule::new(5, 50, 0).unwrap();
        assert_eq!(s.evaluation_count(), 10);
        assert_eq!(s.acceleration_ratio(), 5.0);

        let s = CacheSchedule::new(7, 50, 1).unwrap();
        assert_eq!(s.evaluation_count(), 8);
        assert_eq!(s.acceleration_ratio(), 6.25);

        let s = CacheSchedule::new(1, 50, 0).unwrap();
        assert_eq!(s.evaluation_count(), 50);
        assert_eq!(s.acceleration_ratio(), 1.0);

        let s = CacheSchedule::new(4, 3, 5).unwrap();
        assert_eq!(s.evaluation_count(), 3);
    }

    #[test]
    fn zero_interval_is_a_config_error() {
        assert!(matches!(
            CacheSchedule::new(0, 10, 2),
            Err(FocaError::Config { .. })
        ));
    }

    #[test]
    fn grid_conversion_round_trips() {
        let g = TimeGrid::new(50, 1.0).unwrap();
        assert_eq!(g.timestep(0).unwrap(), 50);
        assert_eq!(g.timestep(49).unwrap(), 1);
        assert_eq!(g.step_index(30).unwrap(), 20);
        assert!(g.timestep(50).is_err());
        assert!(g.step_index(0).is_err());
        assert_eq!(g.timesteps().collect::<Vec<_>>().len(), 51);
        assert!(TimeGrid::new(3, 0.0).is_err());
    }

    #[test]
    fn cache_tracks_recent_and_full_slope() {
        let mut c = CacheState::new(0.5, 2);
        c.record_full(0, fv(&[0.0])).unwrap();
        assert!(c.last_derivative().is_none());
        assert!(c.full_slope().is_none());
        c.record_full(1, fv(&[1.0])).unwrap();
        assert_eq!(c.last_derivative().unwrap(), &fv(&[2.0]));
        assert_eq!(c.full_slope().unwrap(), &fv(&[2.0]));
        c.record_predicted(2, fv(&[3.0])).unwrap();
        assert_eq!(c.recent().len(), 2);
        assert_eq!(c.last_derivative().unwrap(), &fv(&[4.0]));
        c.record_full(5, fv(&[5.0])).unwrap();
        // slope over the gap from step 1 to step 5
        assert_eq!(c.full_slope().unwrap(), &fv(&[2.0]));
        assert_eq!(c.taylor_history().len(), 3);
        c.record_full(6, fv(&[5.0])).unwrap();
        assert_eq!(c.taylor_history().len(), 3);
        assert_eq!(c.taylor_history()[0].step, 1);
        assert!(c.record_predicted(6, fv(&[0.0])).is_err());
    }

    proptest! {
        #[test]
        fn full_step_count_matches_evaluation_count(
            n in 1usize..12, total in 1usize..80, warmup in 0usize..6
        ) {
            let s = CacheSchedule::new(n, total, warmup).unwrap();
            let counted = (0..total).filter(|&i| s.is_full_step(i).unwrap()).count();
            prop_assert_eq!(counted, s.evaluation_count());
            prop_assert!(s.evaluation_count() <= total);
            // a single post-warmup step is always full, so it cannot be skipped either
            prop_assert_eq!(s.evaluation_count() == total, n == 1 || warmup + 1 >= total);
        }

        #[test]
        fn power_of_two_arithmetic_is_exact(
            a in prop::collection::vec(-4096i32..4096, 1..8),
            e in -8i32..8,
        ) {
            let a = FeatureVector::new(a.into_iter().map(f64::from).collect()).unwrap();
            let b = a.scale(2f64.powi(e)).unwrap();
            let back = a.add(&b).unwrap().sub(&b).unwrap();
            for (x, y) in back.as_slice().iter().zip(a.as_slice()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
