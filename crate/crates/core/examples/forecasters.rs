//! The four forecasters on a damped oscillator, skipping 4 of every 5 steps.
//!
//! `cargo run --release --example forecasters`

use foca::dynamics::{LinearSystem, TrajectorySource};
use foca::predictors::{run_cached_sampler, PredictorKind};
use foca::{CacheSchedule, FeatureVector, TimeGrid};

fn main() -> foca::Result<()> {
    let sys = LinearSystem::new(
        vec![-0.05, 0.4, -0.4, -0.05],
        FeatureVector::from_slice(&[1.0, 0.0])?,
    )?;
    let source = TrajectorySource::Linear(sys);
    let grid = TimeGrid::new(40, 0.25)?;
    let schedule = CacheSchedule::with_default_warmup(5, grid.steps())?;
    println!(
        "{} steps, {} full evaluations ({:.2}x)",
        grid.steps(),
        schedule.evaluation_count(),
        schedule.acceleration_ratio()
    );
    let kinds = [
        PredictorKind::Reuse,
        PredictorKind::Taylor { order: 2 },
        PredictorKind::Bdf2Only,
        PredictorKind::FoCa,
    ];
    let reports = kinds
        .iter()
        .map(|&k| run_cached_sampler(&source, &grid, &schedule, k))
        .collect::<foca::Result<Vec<_>>>()?;
    print!("step full");
    for k in &kinds {
        print!(" {:>10}", k.to_string());
    }
    println!();
    for s in 0..grid.steps() {
        print!(
            "{s:>4} {:>4}",
            if reports[0].records[s].is_full {
                "*"
            } else {
                ""
            }
        );
        for r in &reports {
            print!(" {:>10.2e}", r.records[s].rel_error);
        }
        println!();
    }
    for (k, r) in kinds.iter().zip(&reports) {
        println!("{k:>8}: max relative error {:.3e}", r.max_rel_error());
    }
    Ok(())
}
