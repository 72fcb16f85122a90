use serde::{Deserialize, Serialize};

use super::ToyDenoiser;
use crate::error::{FocaError, Result};
use crate::types::FeatureVector;

pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_BETA_START: f64 = 0.002;
pub const DEFAULT_BETA_END: f64 = 0.4;
/// Upper bound on `ᾱ_T` for `x_T` to count as pure noise.
pub const MAX_TERMINAL_ALPHA_BAR: f64 = 1e-3;

/// Per-timestep coefficients, indexed by timestep `t ∈ [1, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    beta_start: f64,
    beta_end: f64,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl DiffusionSchedule {
    /// `β_t = 1 − α_t` linear in `t` from `beta_start` (t = 1) to `beta_end` (t = T), σ = 0.
    pub fn linear_beta(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(FocaError::config(
                "diffusion.steps",
                "need at least 2 timesteps",
            ));
        }
        let alpha: Vec<f64> = (0..steps)
            .map(|i| {
                let f = i as f64 / (steps - 1) as f64;
                1.0 - (beta_start + f * (beta_end - beta_start))
            })
            .collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let s = Self {
            beta_start,
            beta_end,
            alpha,
            alpha_bar,
            sigma: vec![0.0; steps],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn default_toy() -> Self {
        Self::linear_beta(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(FocaError::config(
                "diffusion",
                format!("alpha {a} outside (0, 1)"),
            ));
        }
        if self.alpha_bar.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(FocaError::config(
                "diffusion",
                "alpha_bar not strictly decreasing",
            ));
        }
        let last = *self.alpha_bar.last().unwrap();
        if !(last < MAX_TERMINAL_ALPHA_BAR) {
            return Err(FocaError::config(
                "diffusion",
                format!("terminal alpha_bar {last} not below {MAX_TERMINAL_ALPHA_BAR}"),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(FocaError::OutOfRange {
                what: "timestep",
                value: t as f64,
                lo: 1.0,
                hi: self.steps() as f64,
            });
        }
        Ok(t - 1)
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alpha[self.index(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar[self.index(t)?])
    }

    pub fn sigma(&self, t: usize) -> Result<f64> {
        Ok(self.sigma[self.index(t)?])
    }
}

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·noise`.
pub fn forward_diffuse(
    x0: &FeatureVector,
    t: usize,
    noise: &FeatureVector,
    schedule: &DiffusionSchedule,
) -> Result<FeatureVector> {
    diffuse_with(schedule.alpha_bar(t)?, x0, noise)
}

/// Forward marginal for an explicit cumulative coefficient.
pub fn diffuse_with(
    alpha_bar: f64,
    x0: &FeatureVector,
    noise: &FeatureVector,
) -> Result<FeatureVector> {
    FeatureVector::linear_combination(&[(alpha_bar.sqrt(), x0), ((1.0 - alpha_bar).sqrt(), noise)])
}

/// Reverse step with the network's noise estimate at `(x_t, t)`.
pub fn reverse_step(
    x_t: &FeatureVector,
    t: usize,
    denoiser: &ToyDenoiser,
    schedule: &DiffusionSchedule,
    noise: &FeatureVector,
) -> Result<FeatureVector> {
    let eps = denoiser.eps(x_t, t)?;
    reverse_step_with_eps(x_t, t, &eps, schedule, noise)
}

/// `(x_t − (1−α_t)/√(1−ᾱ_t)·ε)/√α_t + σ_t·noise`.
pub fn reverse_step_with_eps(
    x_t: &FeatureVector,
    t: usize,
    eps: &FeatureVector,
    schedule: &DiffusionSchedule,
    noise: &FeatureVector,
) -> Result<FeatureVector> {
    reverse_with(
        schedule.alpha(t)?,
        schedule.alpha_bar(t)?,
        schedule.sigma(t)?,
        x_t,
        eps,
        noise,
    )
}

/// Deterministic DDIM update: `√ᾱ_{t−1}·x̂₀ + √(1−ᾱ_{t−1})·ε` with
/// `x̂₀ = (x_t − √(1−ᾱ_t)·ε)/√ᾱ_t` and `ᾱ_0 = 1`.
pub fn ddim_step(
    x_t: &FeatureVector,
    t: usize,
    eps: &FeatureVector,
    schedule: &DiffusionSchedule,
) -> Result<FeatureVector> {
    let ab = schedule.alpha_bar(t)?;
    let ab_prev = if t == 1 {
        1.0
    } else {
        schedule.alpha_bar(t - 1)?
    };
    let x0 = FeatureVector::linear_combination(&[
        (1.0 / ab.sqrt(), x_t),
        (-(1.0 - ab).sqrt() / ab.sqrt(), eps),
    ])
    .map_err(|_| FocaError::NonFinite("ddim x0 estimate".into()))?;
    FeatureVector::linear_combination(&[(ab_prev.sqrt(), &x0), ((1.0 - ab_prev).sqrt(), eps)])
        .map_err(|_| FocaError::NonFinite("ddim step output".into()))
}

/// Which reverse update drives a diffusion source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseSampler {
    /// Deterministic DDIM.
    #[default]
    Ddim,
    /// The ancestral update with `σ_t = 0`. Contracts samples toward the
    /// data mean; kept for comparison.
    AncestralMean,
}

/// Reverse step for explicit coefficients.
pub fn reverse_with(
    alpha: f64,
    alpha_bar: f64,
    sigma: f64,
    x_t: &FeatureVector,
    eps: &FeatureVector,
    noise: &FeatureVector,
) -> Result<FeatureVector> {
    let c = 1.0 / alpha.sqrt();
    let e = if alpha == 1.0 {
        0.0
    } else {
        -c * (1.0 - alpha) / (1.0 - alpha_bar).sqrt()
    };
    let mut terms = vec![(c, x_t), (e, eps)];
    if sigma != 0.0 {
        terms.push((sigma, noise));
    } else {
        x_t.check_dim(noise)?;
    }
    FeatureVector::linear_combination(&terms)
        .map_err(|_| FocaError::NonFinite("reverse step output".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::from_slice(v).unwrap()
    }

    #[test]
    fn default_schedule_reaches_noise() {
        let s = DiffusionSchedule::default_toy();
        assert_eq!(s.steps(), 50);
        assert!(s.alpha_bar(50).unwrap() < 1e-3);
        assert_abs_diff_eq!(s.alpha(1).unwrap(), 0.998, epsilon = 1e-15);
        assert_abs_diff_eq!(s.alpha(50).unwrap(), 0.6, epsilon = 1e-15);
        assert!(s.alpha(0).is_err());
        assert!(s.alpha(51).is_err());
    }

    #[test]
    fn forward_limits() {
        let x0 = fv(&[1.5, -0.5]);
        let n = fv(&[0.3, 0.7]);
        assert_eq!(diffuse_with(1.0, &x0, &n).unwrap(), x0);
        assert_eq!(diffuse_with(0.0, &x0, &n).unwrap(), n);
        let v = diffuse_with(0.25, &fv(&[2.0]), &fv(&[4.0])).unwrap();
        assert_abs_diff_eq!(v.as_slice()[0], 1.0 + 2.0 * 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn noise_identity_recovers_x0() {
        let s = DiffusionSchedule::default_toy();
        let x0 = fv(&[2.0, -0.3]);
        let n = fv(&[-1.1, 0.4]);
        for t in [1, 10, 25, 40] {
            let ab = s.alpha_bar(t).unwrap();
            let xt = forward_diffuse(&x0, t, &n, &s).unwrap();
            for i in 0..2 {
                let rec = (xt.as_slice()[i] - (1.0 - ab).sqrt() * n.as_slice()[i]) / ab.sqrt();
                assert_abs_diff_eq!(rec, x0.as_slice()[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ddim_inverts_forward_for_exact_noise() {
        // with the true ε every DDIM step lands on the same x0's marginal path
        let s = DiffusionSchedule::default_toy();
        let x0 = fv(&[1.7, -0.4]);
        let n = fv(&[0.6, 1.3]);
        let xt = forward_diffuse(&x0, 30, &n, &s).unwrap();
        let prev = ddim_step(&xt, 30, &n, &s).unwrap();
        let want = forward_diffuse(&x0, 29, &n, &s).unwrap();
        assert!(prev.distance(&want).unwrap() < 1e-12);
        let last = ddim_step(&forward_diffuse(&x0, 1, &n, &s).unwrap(), 1, &n, &s).unwrap();
        assert!(last.distance(&x0).unwrap() < 1e-12);
    }

    #[test]
    fn reverse_examples() {
        let z = fv(&[0.0]);
        let x = fv(&[0.9]);
        assert_eq!(reverse_with(1.0, 0.5, 0.0, &x, &z, &z).unwrap(), x);
        let y = reverse_with(0.81, 0.5, 0.0, &x, &z, &z).unwrap();
        assert_abs_diff_eq!(y.as_slice()[0], 1.0, epsilon = 1e-15);
    }
}
