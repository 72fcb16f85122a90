use crate::error::{FocaError, Result};
use crate::types::FeatureVector;

use super::RunReport;

/// Added to `‖truth‖` in the relative error denominator.
pub const ERROR_FLOOR: f64 = 1e-12;
/// `‖truth‖` at or below this is treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-9;
pub const DEFAULT_STIFFNESS_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeError {
    /// `‖pred − truth‖ / (‖truth‖ + ERROR_FLOOR)`.
    pub value: f64,
    pub absolute: f64,
    pub degenerate: bool,
}

impl RelativeError {
    /// The relative value, or the absolute error for a degenerate truth.
    pub fn reported(&self) -> f64 {
        if self.degenerate {
            self.absolute
        } else {
            self.value
        }
    }
}

pub fn relative_error(pred: &FeatureVector, truth: &FeatureVector) -> Result<RelativeError> {
    let absolute = pred.distance(truth)?;
    let n = truth.norm();
    Ok(RelativeError {
        value: absolute / (n + ERROR_FLOOR),
        absolute,
        degenerate: n <= DEGENERATE_NORM,
    })
}

/// Defect of one BDF2 step from exact data landing on `at + 1`:
/// `‖(4/3)F_at − (1/3)F_{at−1} + (2h/3)·F'_{at+1} − F_{at+1}‖` with
/// `F'_{at+1} = (F_{at+2} − F_at)/(2h)`. Third order in `h`.
pub fn local_truncation_error(trajectory: &[FeatureVector], h: f64, at: usize) -> Result<f64> {
    if at == 0 || at + 2 >= trajectory.len() {
        return Err(FocaError::OutOfRange {
            what: "lte step",
            value: at as f64,
            lo: 1.0,
            hi: trajectory.len() as f64 - 3.0,
        });
    }
    let slope = trajectory[at + 2]
        .sub(&trajectory[at])?
        .scale(1.0 / (2.0 * h))?;
    let pred = FeatureVector::linear_combination(&[
        (4.0 / 3.0, &trajectory[at]),
        (-1.0 / 3.0, &trajectory[at - 1]),
        (2.0 * h / 3.0, &slope),
    ])?;
    pred.distance(&trajectory[at + 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessIndex {
    pub value: f64,
    /// No usable difference in the window (trajectory locally constant).
    pub degenerate: bool,
}

/// `h · max L̂_k` over a window of `window` terms centred on `at`, with
/// `L̂_k = ‖v_{k+1} − v_k‖ / ‖F_{k+1} − F_k‖` and `v_k = (F_{k+1} − F_k)/h`.
///
/// Dimensionless: `|e^{λh} − 1|` on a linear mode with eigenvalue `λ`.
pub fn stiffness_index(
    trajectory: &[FeatureVector],
    h: f64,
    at: usize,
    window: usize,
) -> Result<StiffnessIndex> {
    if window == 0 {
        return Err(FocaError::Precondition(
            "stiffness window must be positive".into(),
        ));
    }
    if trajectory.len() < 3 || at >= trajectory.len() {
        return Err(FocaError::OutOfRange {
            what: "stiffness step",
            value: at as f64,
            lo: 0.0,
            hi: trajectory.len() as f64 - 1.0,
        });
    }
    let last_k = trajectory.len() - 3;
    let lo = at.saturating_sub((window - 1) / 2);
    let hi = (at + window / 2).min(last_k);
    if lo > hi {
        return Err(FocaError::OutOfRange {
            what: "stiffness step",
            value: at as f64,
            lo: 0.0,
            hi: (last_k + (window - 1) / 2) as f64,
        });
    }
    let mut best: Option<f64> = None;
    for k in lo..=hi {
        let d0 = trajectory[k + 1].sub(&trajectory[k])?;
        let d1 = trajectory[k + 2].sub(&trajectory[k + 1])?;
        let n0 = d0.norm();
        if n0 <= 1e-14 * trajectory[k].norm().max(1.0) {
            continue;
        }
        let lip = d1.distance(&d0)? / (h * n0);
        best = Some(best.map_or(lip, |b: f64| b.max(lip)));
    }
    Ok(match best {
        Some(b) => StiffnessIndex {
            value: h * b,
            degenerate: false,
        },
        None => StiffnessIndex {
            value: 0.0,
            degenerate: true,
        },
    })
}

/// Per-step LTE (landing on the step) and stiffness index of a reference
/// trajectory; zero where the stencil does not fit.
pub fn trajectory_diagnostics(truth: &[FeatureVector], h: f64) -> (Vec<f64>, Vec<f64>) {
    (0..truth.len())
        .map(|s| {
            let lte = if s >= 1 {
                local_truncation_error(truth, h, s - 1).unwrap_or(0.0)
            } else {
                0.0
            };
            let stiff = stiffness_index(truth, h, s, DEFAULT_STIFFNESS_WINDOW)
                .map(|x| x.value)
                .unwrap_or(0.0);
            (lte, stiff)
        })
        .unzip()
}

/// Copies [`trajectory_diagnostics`] into the report's records.
pub fn fill_trajectory_diagnostics(report: &mut RunReport, truth: &[FeatureVector], h: f64) {
    let (lte, stiff) = trajectory_diagnostics(truth, h);
    for r in &mut report.records {
        r.lte = lte[r.step_index];
        r.stiffness_index = stiff[r.step_index];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{
        true_feature_trajectory, LinearSystem, StiffTestProblem, TrajectorySource,
    };
    use crate::types::TimeGrid;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::from_slice(v).unwrap()
    }

    #[test]
    fn relative_error_examples() {
        let t = fv(&[1.0, -2.0, 0.5]);
        assert_eq!(relative_error(&t, &t).unwrap().value, 0.0);
        let r = relative_error(&t.scale(2.0).unwrap(), &t).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
        let r = relative_error(&fv(&[3.0, 4.0]), &fv(&[0.0, 0.0])).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.absolute, 5.0);
        assert_eq!(r.value, 5.0 / ERROR_FLOOR);
        assert_eq!(r.reported(), 5.0);
        assert!(relative_error(&fv(&[1.0]), &t).is_err());
    }

    fn decay(h: f64, n: usize) -> Vec<FeatureVector> {
        (0..n).map(|s| fv(&[(-(s as f64) * h).exp()])).collect()
    }

    #[test]
    fn lte_is_third_order() {
        // same physical time t = 0.5 in both grids
        let a = local_truncation_error(&decay(0.1, 12), 0.1, 4).unwrap();
        let b = local_truncation_error(&decay(0.05, 24), 0.05, 9).unwrap();
        assert!(a > 0.0);
        let ratio = a / b;
        assert!((7.0..9.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lte_boundaries() {
        let tr = decay(0.1, 5);
        assert!(local_truncation_error(&tr, 0.1, 0).is_err());
        assert!(local_truncation_error(&tr, 0.1, 3).is_err());
        assert!(local_truncation_error(&tr, 0.1, 2).is_ok());
    }

    #[test]
    fn stiffness_on_two_scale_system() {
        let p = StiffTestProblem::two_scale(-100.0, -1.0, [1.0, 1.0]).unwrap();
        let grid = TimeGrid::new(200, 0.005).unwrap();
        let tr = true_feature_trajectory(&TrajectorySource::Stiff(p), &grid).unwrap();
        let fast = stiffness_index(&tr, 0.005, 2, 3).unwrap().value;
        let slow = stiffness_index(&tr, 0.005, 180, 3).unwrap().value;
        assert!(fast >= 10.0 * slow, "{fast} vs {slow}");
    }

    #[test]
    fn stiffness_on_rotation_is_flat() {
        let sys = LinearSystem::new(vec![0.0, 1.0, -1.0, 0.0], fv(&[1.0, 0.0])).unwrap();
        let grid = TimeGrid::new(60, 0.1).unwrap();
        let tr = true_feature_trajectory(&TrajectorySource::Linear(sys), &grid).unwrap();
        let v: Vec<f64> = (0..58)
            .map(|s| stiffness_index(&tr, 0.1, s, 3).unwrap().value)
            .collect();
        let (lo, hi) = v
            .iter()
            .fold((f64::MAX, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
        assert!(hi <= 1.2 * lo);
    }

    #[test]
    fn stiffness_degenerate_window() {
        let c = vec![fv(&[1.0, 1.0]); 6];
        let s = stiffness_index(&c, 1.0, 2, 3).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.degenerate);
    }

    proptest! {
        #[test]
        fn relative_error_is_scale_reporting(
            p in prop::collection::vec(-10.0f64..10.0, 3),
            t in prop::collection::vec(0.5f64..10.0, 3),
            c in 0.01f64..100.0,
        ) {
            let (p, t) = (fv(&p), fv(&t));
            let a = relative_error(&p, &t).unwrap().value;
            let b = relative_error(&p.scale(c).unwrap(), &t.scale(c).unwrap()).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn affine_trajectories_have_zero_lte_and_stiffness(
            a in prop::collection::vec(-5.0f64..5.0, 2),
            b in prop::collection::vec(0.1f64..5.0, 2),
            h in 0.05f64..1.0,
        ) {
            let tr: Vec<FeatureVector> = (0..8)
                .map(|s| fv(&[a[0] + b[0] * s as f64 * h, a[1] + b[1] * s as f64 * h]))
                .collect();
            for at in 1..5 {
                prop_assert!(local_truncation_error(&tr, h, at).unwrap() < 1e-10);
                prop_assert!(stiffness_index(&tr, h, at, 3).unwrap().value < 1e-9);
            }
        }
    }
}
