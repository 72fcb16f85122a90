//! Feature forecasters for skipped steps.
//!
//! Derivatives are backward first differences over cached values. On the
//! uniform grid used by the cached sampler, `recent` always holds the two
//! newest consecutive features, so the explicit BDF2 predictor reduces to
//! linear extrapolation `2F_k − F_{k−1}` and the Heun-corrected value to
//! `F_k + h·(S + D)/2` with `S` the slope at the latest full computation and
//! `D` the latest backward difference.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{relative_error, RunReport, StepRecord};
use crate::dynamics::{Sampler, TrajectorySource};
use crate::error::{FocaError, Result};
use crate::types::{CacheSchedule, CacheState, FeatureVector, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PredictorKind {
    Reuse,
    Taylor { order: usize },
    Bdf2Only,
    FoCa,
}

impl PredictorKind {
    /// Label used in output files; Taylor's order is reported separately.
    pub fn label(&self) -> &'static str {
        match self {
            PredictorKind::Reuse => "reuse",
            PredictorKind::Taylor { .. } => "taylor",
            PredictorKind::Bdf2Only => "bdf2",
            PredictorKind::FoCa => "foca",
        }
    }

    pub fn taylor_order(&self) -> Option<usize> {
        match self {
            PredictorKind::Taylor { order } => Some(*order),
            _ => None,
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorKind::Taylor { order } => write!(f, "taylor{order}"),
            other => f.write_str(other.label()),
        }
    }
}

impl FromStr for PredictorKind {
    type Err = FocaError;

    /// Accepts `reuse`, `bdf2`, `foca`, `taylor` (order 2) and `taylorM`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "reuse" => Ok(PredictorKind::Reuse),
            "bdf2" | "bdf2only" | "bdf2_only" => Ok(PredictorKind::Bdf2Only),
            "foca" => Ok(PredictorKind::FoCa),
            "taylor" => Ok(PredictorKind::Taylor { order: 2 }),
            _ => match lower.strip_prefix("taylor").map(str::parse::<usize>) {
                Some(Ok(order)) if order >= 1 => Ok(PredictorKind::Taylor { order }),
                _ => Err(FocaError::config(
                    "kinds",
                    format!("unknown predictor `{s}`"),
                )),
            },
        }
    }
}

impl TryFrom<String> for PredictorKind {
    type Error = FocaError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PredictorKind> for String {
    fn from(k: PredictorKind) -> Self {
        k.to_string()
    }
}

/// Copy of the latest full computation.
pub fn predict_reuse(cache: &CacheState) -> Result<FeatureVector> {
    cache
        .last_full()
        .map(|s| s.feature.clone())
        .ok_or(FocaError::MissingHistory("reuse needs a full computation"))
}

/// Backward differences `Δ¹ … Δᵐ` at the newest entry of `history`
/// (oldest first). With fewer than `m + 1` entries the order is reduced.
pub fn finite_differences(history: &[FeatureVector], m: usize) -> Result<Vec<FeatureVector>> {
    if history.is_empty() {
        return Err(FocaError::MissingHistory(
            "finite differences need one feature",
        ));
    }
    let order = m.min(history.len() - 1);
    let mut level: Vec<FeatureVector> = history.to_vec();
    let mut out = Vec::with_capacity(order);
    for _ in 0..order {
        level = level
            .windows(2)
            .map(|w| w[1].sub(&w[0]))
            .collect::<Result<_>>()?;
        out.push(level.last().unwrap().clone());
    }
    Ok(out)
}

/// `F + Σ Δⁱ/(i!·Nⁱ)·(−k)ⁱ` for explicitly supplied differences. The
/// differences follow the reverse-time convention, so a trend in sampling
/// order enters with sign `(−1)ⁱ`.
pub fn taylor_expansion(
    feature: &FeatureVector,
    deltas: &[FeatureVector],
    k: usize,
    interval: usize,
) -> Result<FeatureVector> {
    let mut terms = vec![(1.0, feature)];
    let mut coeff = 1.0;
    for (i, d) in deltas.iter().enumerate() {
        coeff *= -(k as f64) / ((i + 1) as f64 * interval as f64);
        terms.push((coeff, d));
    }
    FeatureVector::linear_combination(&terms)
}

/// Taylor forecast `k` steps past the latest full computation, order `m`
/// (reduced if fewer full computations are cached).
///
/// Differences are taken recursively over the actual gaps between full
/// computations, which equals `Δⁱ/Nⁱ` on the regular part of the schedule
/// and stays consistent across the warmup boundary.
pub fn predict_taylor(cache: &CacheState, k: usize, m: usize) -> Result<FeatureVector> {
    let hist = cache.taylor_history();
    let last = hist
        .back()
        .ok_or(FocaError::MissingHistory("taylor needs a full computation"))?;
    let order = m.min(hist.len() - 1);
    let steps: Vec<f64> = hist.iter().map(|s| s.step as f64).collect();
    let mut level: Vec<FeatureVector> = hist.iter().map(|s| s.feature.clone()).collect();
    let mut terms: Vec<(f64, FeatureVector)> = Vec::with_capacity(order);
    let mut coeff = 1.0;
    for i in 0..order {
        let offset = steps.len() - level.len();
        level = level
            .windows(2)
            .enumerate()
            .map(|(j, w)| {
                let gap = steps[offset + j + 1] - steps[offset + j];
                w[1].sub(&w[0])?.scale(1.0 / gap)
            })
            .collect::<Result<_>>()?;
        coeff *= k as f64 / (i + 1) as f64;
        terms.push((coeff, level.last().unwrap().clone()));
    }
    let mut combo: Vec<(f64, &FeatureVector)> = vec![(1.0, &last.feature)];
    combo.extend(terms.iter().map(|(c, f)| (*c, f)));
    FeatureVector::linear_combination(&combo)
}

/// Backward difference of the two `recent` entries over their actual spacing.
pub fn estimate_derivative(cache: &CacheState, h: f64) -> Result<FeatureVector> {
    let r = cache.recent();
    if r.len() < 2 {
        return Err(FocaError::MissingHistory(
            "derivative needs two cached features",
        ));
    }
    let span = (r[1].step - r[0].step) as f64 * h;
    r[1].feature.sub(&r[0].feature)?.scale(1.0 / span)
}

/// `(4/3)F_k − (1/3)F_{k−1} + (2h/3)·F'_k`. Pure: the caller records the result.
pub fn predict_bdf2(cache: &CacheState, h: f64) -> Result<FeatureVector> {
    let d = estimate_derivative(cache, h)?;
    let r = cache.recent();
    FeatureVector::linear_combination(&[
        (4.0 / 3.0, &r[1].feature),
        (-1.0 / 3.0, &r[0].feature),
        (2.0 * h / 3.0, &d),
    ])
}

/// `F_k + (h/2)·[S + (predicted − F_k)/h]`, `S` the slope stored at the latest
/// full computation.
pub fn correct_heun(
    cache: &CacheState,
    predicted: &FeatureVector,
    h: f64,
) -> Result<FeatureVector> {
    let current = &cache
        .recent()
        .back()
        .ok_or(FocaError::MissingHistory(
            "corrector needs a current feature",
        ))?
        .feature;
    let s = cache.full_slope().ok_or(FocaError::MissingHistory(
        "corrector needs the full-step slope",
    ))?;
    let forward = predicted.sub(current)?.scale(1.0 / h)?;
    FeatureVector::linear_combination(&[(1.0, current), (0.5 * h, s), (0.5 * h, &forward)])
}

/// BDF2 prediction followed by the Heun correction.
pub fn foca_step(cache: &CacheState, h: f64) -> Result<FeatureVector> {
    let p = predict_bdf2(cache, h)?;
    correct_heun(cache, &p, h)
}

/// First-order forecast used when `recent` is too short for BDF2:
/// `F + h·S` if a full-step slope exists, otherwise reuse.
pub fn euler_fallback(cache: &CacheState, h: f64) -> Result<FeatureVector> {
    let last = cache
        .recent()
        .back()
        .ok_or(FocaError::MissingHistory("fallback needs a cached feature"))?;
    match cache.full_slope() {
        Some(s) => FeatureVector::linear_combination(&[(1.0, &last.feature), (h, s)]),
        None => Ok(last.feature.clone()),
    }
}

/// Forecast for skipped step `step`; the flag reports a first-order fallback.
pub fn predict(
    kind: PredictorKind,
    cache: &CacheState,
    step: usize,
    h: f64,
) -> Result<(FeatureVector, bool)> {
    let last_full = cache.last_full().ok_or(FocaError::MissingHistory(
        "prediction needs a full computation",
    ))?;
    let k = step - last_full.step;
    match kind {
        PredictorKind::Reuse => Ok((predict_reuse(cache)?, false)),
        PredictorKind::Taylor { order } => Ok((predict_taylor(cache, k, order)?, false)),
        PredictorKind::Bdf2Only | PredictorKind::FoCa if cache.recent().len() < 2 => {
            Ok((euler_fallback(cache, h)?, true))
        }
        PredictorKind::Bdf2Only => Ok((predict_bdf2(cache, h)?, false)),
        PredictorKind::FoCa => Ok((foca_step(cache, h)?, false)),
    }
}

/// Cached run against a precomputed uncached reference.
///
/// `truth` and `truth_output` must come from `sampler.run_uncached()`; the
/// LTE and stiffness columns are left at zero for the caller to fill.
pub fn run_cached_with_truth(
    sampler: &Sampler<'_>,
    truth: &[FeatureVector],
    truth_output: Option<&FeatureVector>,
    schedule: &CacheSchedule,
    kind: PredictorKind,
) -> Result<RunReport> {
    let grid = *sampler.grid();
    if schedule.total_steps() != grid.steps() || truth.len() != grid.steps() {
        return Err(FocaError::Precondition(format!(
            "schedule covers {} steps, grid {}, reference {}",
            schedule.total_steps(),
            grid.steps(),
            truth.len()
        )));
    }
    let h = grid.h();
    let mut cache = CacheState::new(h, kind.taylor_order().unwrap_or(0));
    let mut state = sampler.start();
    let mut records = Vec::with_capacity(grid.steps());
    let mut fallback_steps = Vec::new();
    for s in 0..grid.steps() {
        let full = schedule.is_full_step(s)?;
        let (feature, predicted) = if full {
            let f = sampler.evaluate(&state, s)?;
            cache.record_full(s, f.clone())?;
            (f, None)
        } else {
            let (p, fell_back) = predict(kind, &cache, s, h)
                .map_err(|e| FocaError::NonFinite(format!("{kind} prediction at step {s}: {e}")))?;
            if fell_back {
                fallback_steps.push(s);
            }
            cache.record_predicted(s, p.clone())?;
            (p.clone(), Some(p))
        };
        sampler
            .advance(&mut state, s, &feature)
            .map_err(|e| FocaError::NonFinite(format!("{kind} run at step {s}: {e}")))?;
        let (rel, degenerate) = match &predicted {
            Some(p) => {
                let r = relative_error(p, &truth[s])?;
                (r.reported(), r.degenerate)
            }
            None => (0.0, false),
        };
        records.push(StepRecord {
            step_index: s,
            is_full: full,
            predicted,
            used: feature,
            truth: truth[s].clone(),
            rel_error: rel,
            degenerate_truth: degenerate,
            lte: 0.0,
            stiffness_index: 0.0,
        });
    }
    let output = sampler.output(&state);
    let terminal_sample_deviation = match (&output, truth_output) {
        (Some(a), Some(b)) => Some(a.distance(b)?),
        _ => None,
    };
    Ok(RunReport {
        kind,
        records,
        evaluation_count: schedule.evaluation_count(),
        acceleration_ratio: schedule.acceleration_ratio(),
        terminal_sample_deviation,
        mmd_to_data: None,
        fallback_steps,
        final_sample: output,
    })
}

/// Cached run of `source` on `grid`, with per-step errors against the
/// uncached run and LTE/stiffness of the uncached trajectory.
pub fn run_cached_sampler(
    source: &TrajectorySource,
    grid: &TimeGrid,
    schedule: &CacheSchedule,
    kind: PredictorKind,
) -> Result<RunReport> {
    let sampler = Sampler::new(source, *grid)?;
    let (truth, out) = sampler.run_uncached()?;
    let mut report = run_cached_with_truth(&sampler, &truth, out.as_ref(), schedule, kind)?;
    crate::diagnostics::fill_trajectory_diagnostics(&mut report, &truth, grid.h());
    Ok(report)
}
