//! Ground-truth feature trajectories: analytic linear flows, stiff test
//! problems and a small trained diffusion denoiser.

mod denoiser;
mod diffusion;
mod linear;
mod source;
mod stiff;

pub use denoiser::{
    bayes_floor_mse, gmm_dataset, train_denoiser, GmmSpec, ToyDenoiser, TrainConfig, TrainLogRow,
    TrainReport, DEFAULT_MSE_THRESHOLD, EMBED_DIM, HIDDEN, WEIGHTS_FORMAT_VERSION, X_DIM,
};
pub use diffusion::{
    ddim_step, diffuse_with, forward_diffuse, reverse_step, reverse_step_with_eps, reverse_with,
    DiffusionSchedule, ReverseSampler, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS,
    MAX_TERMINAL_ALPHA_BAR,
};
pub use linear::{LinearSystem, DEFAULT_REFERENCE_DT};
pub use source::{true_feature_trajectory, Sampler, SamplerState, TrajectorySource};
pub use stiff::{StiffTestProblem, MIN_STIFFNESS_RATIO};

/// Classical fourth-order Runge–Kutta with `n` steps of size `dt` from `t0`.
pub fn rk4<F>(f: F, y0: &[f64], t0: f64, dt: f64, n: usize) -> Vec<f64>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
{
    let d = y0.len();
    let mut y = y0.to_vec();
    let mut tmp = vec![0.0; d];
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        let k1 = f(&y, t);
        for j in 0..d {
            tmp[j] = y[j] + 0.5 * dt * k1[j];
        }
        let k2 = f(&tmp, t + 0.5 * dt);
        for j in 0..d {
            tmp[j] = y[j] + 0.5 * dt * k2[j];
        }
        let k3 = f(&tmp, t + 0.5 * dt);
        for j in 0..d {
            tmp[j] = y[j] + dt * k3[j];
        }
        let k4 = f(&tmp, t + dt);
        for j in 0..d {
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    y
}
