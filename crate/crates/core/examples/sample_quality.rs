//! MMD between generated samples and the data distribution, uncached and
//! with each forecaster at a fixed interval.
//!
//! `cargo run --release --example sample_quality -- [samples] [interval]`

use std::sync::Arc;

use foca::diagnostics::mmd_sample_quality;
use foca::dynamics::{Sampler, ToyDenoiser};
use foca::harness::{build_sources, reference_samples, ExperimentConfig};
use foca::predictors::{run_cached_with_truth, PredictorKind};
use foca::{CacheSchedule, FeatureVector};

fn main() -> foca::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args
        .next()
        .map_or(500, |a| a.parse().expect("sample count"));
    let interval: usize = args.next().map_or(5, |a| a.parse().expect("interval"));
    let mut cfg = ExperimentConfig::default();
    cfg.source.samples = n;
    let model = Arc::new(ToyDenoiser::bundled());
    let grid = cfg.grid()?;
    let sources = build_sources(&cfg, Some(&model), 0)?;
    let data = reference_samples(&cfg, 0, n);
    let schedule = CacheSchedule::with_default_warmup(interval, grid.steps())?;

    let mut truths = Vec::new();
    let mut uncached = Vec::new();
    for src in &sources {
        let (t, x0) = Sampler::new(src, grid)?.run_uncached()?;
        truths.push(t);
        uncached.push(x0.expect("denoiser output"));
    }
    println!(
        "uncached  mmd {:.3e}",
        mmd_sample_quality(&uncached, &data)?
    );
    for kind in [
        PredictorKind::Reuse,
        PredictorKind::Taylor { order: 2 },
        PredictorKind::Bdf2Only,
        PredictorKind::FoCa,
    ] {
        let mut samples: Vec<FeatureVector> = Vec::with_capacity(n);
        for (i, src) in sources.iter().enumerate() {
            let sampler = Sampler::new(src, grid)?;
            let rep =
                run_cached_with_truth(&sampler, &truths[i], Some(&uncached[i]), &schedule, kind)?;
            samples.push(rep.final_sample.expect("denoiser output"));
        }
        println!(
            "{:>8}  mmd {:.3e}  (N = {interval})",
            kind.to_string(),
            mmd_sample_quality(&samples, &data)?
        );
    }
    Ok(())
}
