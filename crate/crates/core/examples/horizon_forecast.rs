//! Forecast error over a fixed horizon, starting deeper and deeper into the
//! late, stiff part of the denoiser trajectory.
//!
//! `cargo run --release --example horizon_forecast`

use std::sync::Arc;

use foca::diagnostics::multi_horizon_forecast_error;
use foca::dynamics::{ReverseSampler, ToyDenoiser, TrajectorySource};
use foca::harness::initial_noise;
use foca::predictors::PredictorKind;
use foca::TimeGrid;

fn main() -> foca::Result<()> {
    let model = Arc::new(ToyDenoiser::bundled());
    let grid = TimeGrid::new(model.schedule().steps(), 1.0)?;
    let timesteps = [30, 20, 10];
    let starts: Vec<usize> = timesteps
        .iter()
        .map(|t| grid.step_index(*t))
        .collect::<foca::Result<_>>()?;
    let kinds = [PredictorKind::Taylor { order: 2 }, PredictorKind::FoCa];
    let src = TrajectorySource::Denoiser {
        model,
        x_init: initial_noise(0, 1).remove(0),
        sampler: ReverseSampler::Ddim,
    };
    for c in multi_horizon_forecast_error(&src, &grid, &starts, 10, &kinds)? {
        let t = grid.timestep(c.start)?;
        let curve: Vec<String> = c.errors.iter().map(|e| format!("{e:.3}")).collect();
        println!(
            "{:>8} forecasting from t={t:<2} | {}",
            c.kind.to_string(),
            curve.join(" ")
        );
    }
    Ok(())
}
