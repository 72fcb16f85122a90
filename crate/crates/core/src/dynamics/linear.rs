use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::rk4;
use crate::error::{FocaError, Result};
use crate::types::FeatureVector;

/// Reference integrator step for matrices without a closed form.
pub const DEFAULT_REFERENCE_DT: f64 = 1e-3;

/// `dF/dt = A·F` with a known initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    dim: usize,
    /// Row-major `dim × dim`.
    matrix: Vec<f64>,
    initial_state: FeatureVector,
    reference_dt: f64,
}

impl LinearSystem {
    pub fn new(matrix: Vec<f64>, initial_state: FeatureVector) -> Result<Self> {
        let dim = initial_state.dim();
        if matrix.len() != dim * dim {
            return Err(FocaError::DimMismatch {
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(FocaError::NonFinite("system matrix".into()));
        }
        Ok(Self {
            dim,
            matrix,
            initial_state,
            reference_dt: DEFAULT_REFERENCE_DT,
        })
    }

    pub fn diagonal(rates: &[f64], initial_state: FeatureVector) -> Result<Self> {
        let d = rates.len();
        let mut m = vec![0.0; d * d];
        for (i, r) in rates.iter().enumerate() {
            m[i * d + i] = *r;
        }
        Self::new(m, initial_state)
    }

    /// Diagonal system whose exact one-step propagator over `h` has the given
    /// per-component contraction factors, so `contraction_rho(h)` is their max.
    pub fn with_step_factors(
        factors: &[f64],
        h: f64,
        initial_state: FeatureVector,
    ) -> Result<Self> {
        if let Some(f) = factors.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(FocaError::Precondition(format!(
                "step factor {f} outside (0, 1]"
            )));
        }
        let rates: Vec<f64> = factors.iter().map(|f| f.ln() / h).collect();
        Self::diagonal(&rates, initial_state)
    }

    pub fn with_reference_dt(mut self, dt: f64) -> Self {
        self.reference_dt = dt;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn initial_state(&self) -> &FeatureVector {
        &self.initial_state
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim;
        (0..d).all(|i| (0..d).all(|j| i == j || self.matrix[i * d + j] == 0.0))
    }

    pub fn rhs(&self, state: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.matrix[i * d + j] * state[j]).sum())
            .collect()
    }

    /// `exp(A·t)·F(0)`.
    pub fn exact_solution(&self, t: f64) -> Result<FeatureVector> {
        self.propagate(&self.initial_state, t)
    }

    /// `exp(A·t)·state`: closed form for diagonal and 2×2 matrices, otherwise
    /// classical RK4 at the reference step.
    pub fn propagate(&self, state: &FeatureVector, t: f64) -> Result<FeatureVector> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(FocaError::OutOfRange {
                what: "time",
                value: t,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if state.dim() != self.dim {
            return Err(FocaError::DimMismatch {
                expected: self.dim,
                got: state.dim(),
            });
        }
        let x = state.as_slice();
        let out = if self.is_diagonal() {
            (0..self.dim)
                .map(|i| x[i] * (self.matrix[i * self.dim + i] * t).exp())
                .collect()
        } else if self.dim == 2 {
            let e = exp2x2(&self.matrix, t);
            vec![e[0] * x[0] + e[1] * x[1], e[2] * x[0] + e[3] * x[1]]
        } else {
            let n = (t / self.reference_dt).ceil().max(1.0) as usize;
            rk4(|y, _| self.rhs(y), x, 0.0, t / n as f64, n)
        };
        FeatureVector::new(out)
            .map_err(|_| FocaError::Overflow(format!("exp(A·t) at t = {t} is not representable")))
    }

    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        if self.is_diagonal() {
            return (0..self.dim)
                .map(|i| (self.matrix[i * self.dim + i], 0.0))
                .collect();
        }
        DMatrix::from_row_slice(self.dim, self.dim, &self.matrix)
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re, z.im))
            .collect()
    }

    /// Spectral radius of the exact one-step propagator `exp(h·A)`,
    /// i.e. `max exp(h·Re λ)`.
    pub fn contraction_rho(&self, h: f64) -> f64 {
        self.eigenvalues()
            .into_iter()
            .map(|(re, _)| (h * re).exp())
            .fold(0.0, f64::max)
    }
}

/// Closed form of `exp(A·t)` for a row-major 2×2 matrix.
fn exp2x2(a: &[f64], t: f64) -> [f64; 4] {
    let mu = 0.5 * (a[0] + a[3]);
    let det = a[0] * a[3] - a[1] * a[2];
    let q = mu * mu - det;
    // exp(At) = e^{μt}·(c·I + s·(A − μI))
    let (c, s) = if q > 0.0 {
        let d = q.sqrt();
        if d * t.abs() < 1e-8 {
            (1.0, t)
        } else {
            ((d * t).cosh(), (d * t).sinh() / d)
        }
    } else if q < 0.0 {
        let w = (-q).sqrt();
        if w * t.abs() < 1e-8 {
            (1.0, t)
        } else {
            ((w * t).cos(), (w * t).sin() / w)
        }
    } else {
        (1.0, t)
    };
    let g = (mu * t).exp();
    [
        g * (c + s * (a[0] - mu)),
        g * s * a[1],
        g * s * a[2],
        g * (c + s * (a[3] - mu)),
    ]
}
