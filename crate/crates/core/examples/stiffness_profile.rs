//! Local truncation error and stiffness index along the toy denoiser's
//! hidden-feature trajectory and along a two-scale linear problem.
//!
//! `cargo run --release --example stiffness_profile`

use std::sync::Arc;

use foca::diagnostics::trajectory_diagnostics;
use foca::dynamics::{
    true_feature_trajectory, ReverseSampler, StiffTestProblem, ToyDenoiser, TrajectorySource,
};
use foca::harness::initial_noise;
use foca::TimeGrid;

fn main() -> foca::Result<()> {
    let model = Arc::new(ToyDenoiser::bundled());
    let grid = TimeGrid::new(model.schedule().steps(), 1.0)?;
    let draws = initial_noise(0, 32);
    let mut lte = vec![0.0; grid.steps()];
    let mut stiff = vec![0.0; grid.steps()];
    for x_init in draws.iter().cloned() {
        let src = TrajectorySource::Denoiser {
            model: Arc::clone(&model),
            x_init,
            sampler: ReverseSampler::Ddim,
        };
        let (l, s) = trajectory_diagnostics(&true_feature_trajectory(&src, &grid)?, grid.h());
        for i in 0..grid.steps() {
            lte[i] += l[i] / draws.len() as f64;
            stiff[i] += s[i] / draws.len() as f64;
        }
    }
    println!("denoiser, mean over {} trajectories", draws.len());
    println!("step timestep        lte  stiffness");
    for s in 0..grid.steps() {
        println!(
            "{s:>4} {:>8} {:>10.3e} {:>10.3e}",
            grid.timestep(s)?,
            lte[s],
            stiff[s]
        );
    }

    let problem = StiffTestProblem::two_scale(-20.0, -0.1, [1.0, 1.0])?;
    let grid = TimeGrid::new(20, 0.05)?;
    let (l, s) = trajectory_diagnostics(
        &true_feature_trajectory(&TrajectorySource::Stiff(problem), &grid)?,
        grid.h(),
    );
    println!("two-scale problem (stiffness ratio 200), h = {}", grid.h());
    for i in 0..grid.steps() {
        println!("{i:>4} {:>10.3e} {:>10.3e}", l[i], s[i]);
    }
    Ok(())
}
