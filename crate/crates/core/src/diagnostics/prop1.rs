use serde::{Deserialize, Serialize};

use crate::dynamics::LinearSystem;
use crate::error::{FocaError, Result};
use crate::predictors::{predict, PredictorKind};
use crate::types::{CacheState, FeatureVector};

/// Multiplicative tolerance on the bound.
pub const DEFAULT_SLACK: f64 = 1.05;

/// Outcome of the contraction-bound check.
///
/// Starting from a warm cache (`warmup` exact full computations), the
/// predictor runs `max_k` consecutive skips producing `P_1 … P_k`. With
/// `Φ` the exact one-step flow and `P_0` the last exact feature:
///
/// * `taus[j] = ‖P_j − Φ(P_{j−1})‖`, the defect each skip adds on top of the
///   flow of the previous prediction;
/// * `errors[k] = ‖P_k − F*_k‖` against the exact trajectory;
/// * `bounds[k] = (1 − ρᵏ)/(1 − ρ)·τ_max`, `ρ` the spectral radius of `Φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: PredictorKind,
    pub rho: f64,
    pub h: f64,
    pub warmup: usize,
    pub slack: f64,
    pub tau_max: f64,
    pub taus: Vec<f64>,
    pub errors: Vec<f64>,
    pub bounds: Vec<f64>,
    pub pass: Vec<bool>,
    pub sup_bound: f64,
    /// Every `errors[k] ≤ bounds[k]·slack`.
    pub bound_holds: bool,
    /// `max errors ≤ sup_bound·slack`.
    pub sup_bound_holds: bool,
    /// `errors` strictly increasing over `k ∈ [1, min(10, max_k)]`: the
    /// k-growth signature of schemes whose error is not k-independent.
    pub error_strictly_increasing: bool,
}

impl BoundReport {
    pub fn verdict(&self) -> bool {
        self.bound_holds && self.sup_bound_holds
    }
}

pub fn verify_proposition1(
    system: &LinearSystem,
    h: f64,
    warmup: usize,
    max_k: usize,
    kind: PredictorKind,
    slack: f64,
) -> Result<BoundReport> {
    let rho = system.contraction_rho(h);
    if !(rho < 1.0) {
        return Err(FocaError::Precondition(format!(
            "system is not contractive: rho = {rho} >= 1"
        )));
    }
    let warm = warmup.max(1);
    let exact = |s: usize| system.exact_solution(s as f64 * h);
    let mut cache = CacheState::new(h, kind.taylor_order().unwrap_or(0));
    for s in 0..warm {
        cache.record_full(s, exact(s)?)?;
    }
    let mut prev: FeatureVector = exact(warm - 1)?;
    let (mut taus, mut errors) = (Vec::with_capacity(max_k), Vec::with_capacity(max_k));
    for k in 1..=max_k {
        let s = warm - 1 + k;
        let (p, _) = predict(kind, &cache, s, h)?;
        taus.push(p.distance(&system.propagate(&prev, h)?)?);
        errors.push(p.distance(&exact(s)?)?);
        cache.record_predicted(s, p.clone())?;
        prev = p;
    }
    let tau_max = taus.iter().cloned().fold(0.0, f64::max);
    let bounds: Vec<f64> = (1..=max_k)
        .map(|k| (1.0 - rho.powi(k as i32)) / (1.0 - rho) * tau_max)
        .collect();
    let pass: Vec<bool> = errors
        .iter()
        .zip(&bounds)
        .map(|(e, b)| *e <= b * slack)
        .collect();
    let sup_bound = tau_max / (1.0 - rho);
    let max_err = errors.iter().cloned().fold(0.0, f64::max);
    let head = &errors[..errors.len().min(10)];
    Ok(BoundReport {
        kind,
        rho,
        h,
        warmup: warm,
        slack,
        tau_max,
        taus,
        bounds,
        bound_holds: pass.iter().all(|p| *p),
        pass,
        sup_bound,
        sup_bound_holds: max_err <= sup_bound * slack,
        error_strictly_increasing: head.len() >= 2 && head.windows(2).all(|w| w[1] > w[0]),
        errors,
    })
}
