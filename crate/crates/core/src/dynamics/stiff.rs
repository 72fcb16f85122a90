use serde::{Deserialize, Serialize};

use super::{rk4, LinearSystem};
use crate::error::{FocaError, Result};
use crate::types::{FeatureVector, TimeGrid};

/// Reference substeps per grid step for problems without a closed form.
const SUBSTEPS: usize = 1000;

/// Minimum `|λ_fast / λ_slow|` accepted for the two-scale problem.
pub const MIN_STIFFNESS_RATIO: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum StiffTestProblem {
    /// `dF/dt = diag(λ_fast, λ_slow)·F`.
    TwoScale {
        lambda_fast: f64,
        lambda_slow: f64,
        initial: [f64; 2],
    },
    /// `y₁' = y₂`, `y₂' = μ(1 − y₁²)y₂ − y₁`.
    VanDerPol { mu: f64, initial: [f64; 2] },
}

impl StiffTestProblem {
    pub fn two_scale(lambda_fast: f64, lambda_slow: f64, initial: [f64; 2]) -> Result<Self> {
        let p = StiffTestProblem::TwoScale {
            lambda_fast,
            lambda_slow,
            initial,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn van_der_pol(mu: f64, initial: [f64; 2]) -> Result<Self> {
        let p = StiffTestProblem::VanDerPol { mu, initial };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StiffTestProblem::TwoScale {
                lambda_fast,
                lambda_slow,
                initial,
            } => {
                if !(lambda_fast < 0.0 && lambda_slow < 0.0) {
                    return Err(FocaError::Precondition(
                        "two-scale eigenvalues must be negative".into(),
                    ));
                }
                let r = lambda_fast / lambda_slow;
                if !(r.abs() >= MIN_STIFFNESS_RATIO) {
                    return Err(FocaError::Precondition(format!(
                        "stiffness ratio {r} below {MIN_STIFFNESS_RATIO}"
                    )));
                }
                FeatureVector::from_slice(&initial).map(|_| ())
            }
            StiffTestProblem::VanDerPol { mu, initial } => {
                if !(mu >= 0.0 && mu.is_finite()) {
                    return Err(FocaError::Precondition(format!("mu {mu} must be ≥ 0")));
                }
                FeatureVector::from_slice(&initial).map(|_| ())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StiffTestProblem::TwoScale { .. } => "two_scale",
            StiffTestProblem::VanDerPol { .. } => "van_der_pol",
        }
    }

    /// `|λ_fast/λ_slow|` for the linear problem, `μ` for Van der Pol.
    pub fn stiffness_ratio(&self) -> f64 {
        match *self {
            StiffTestProblem::TwoScale {
                lambda_fast,
                lambda_slow,
                ..
            } => (lambda_fast / lambda_slow).abs(),
            StiffTestProblem::VanDerPol { mu, .. } => mu,
        }
    }

    pub fn rhs(&self, y: &[f64]) -> Vec<f64> {
        match *self {
            StiffTestProblem::TwoScale {
                lambda_fast,
                lambda_slow,
                ..
            } => vec![lambda_fast * y[0], lambda_slow * y[1]],
            StiffTestProblem::VanDerPol { mu, .. } => {
                vec![y[1], mu * (1.0 - y[0] * y[0]) * y[1] - y[0]]
            }
        }
    }

    /// Solution sampled at every grid point, `steps + 1` values starting at `t = 0`.
    pub fn trajectory(&self, grid: &TimeGrid) -> Result<Vec<FeatureVector>> {
        match *self {
            StiffTestProblem::TwoScale {
                lambda_fast,
                lambda_slow,
                initial,
            } => {
                let sys = LinearSystem::diagonal(
                    &[lambda_fast, lambda_slow],
                    FeatureVector::from_slice(&initial)?,
                )?;
                (0..=grid.steps())
                    .map(|s| sys.exact_solution(grid.time(s)))
                    .collect()
            }
            StiffTestProblem::VanDerPol { initial, .. } => {
                let h = grid.h();
                let dt = h / SUBSTEPS as f64;
                let mut y = initial.to_vec();
                let mut out = Vec::with_capacity(grid.steps() + 1);
                out.push(FeatureVector::new(y.clone())?);
                for s in 0..grid.steps() {
                    y = rk4(|v, _| self.rhs(v), &y, grid.time(s), dt, SUBSTEPS);
                    out.push(FeatureVector::new(y.clone()).map_err(|_| {
                        FocaError::NonFinite(format!("van der pol state at step {}", s + 1))
                    })?);
                }
                Ok(out)
            }
        }
    }
}
