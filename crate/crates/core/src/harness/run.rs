use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{ExperimentConfig, SourceKind};
use super::format::{self, FailureRow, StepRow, SummaryRow};
use crate::diagnostics::{
    mmd_sample_quality, trajectory_diagnostics, verify_proposition1, BoundReport,
};
use crate::dynamics::{train_denoiser, Sampler, ToyDenoiser, TrainReport, TrajectorySource};
use crate::error::{FocaError, Result};
use crate::predictors::{run_cached_with_truth, PredictorKind};
use crate::rng::{self, Stream};
use crate::types::{CacheSchedule, FeatureVector, TimeGrid};

/// Result of a sweep: rows in (kind, N, seed) order, as listed in the config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub steps: Vec<StepRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<FailureRow>,
}

impl SweepOutput {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Trajectories shared by every cell of one seed.
struct SeedData {
    sources: Vec<TrajectorySource>,
    truths: Vec<Vec<FeatureVector>>,
    outputs: Vec<Option<FeatureVector>>,
    reference: Option<Vec<FeatureVector>>,
    lte: Vec<f64>,
    stiffness: Vec<f64>,
}

/// Initial noise draws for a denoiser batch: `n` pairs from the seed's
/// initial-noise stream, in order.
pub fn initial_noise(seed: u64, n: usize) -> Vec<FeatureVector> {
    let mut r = rng::stream(seed, Stream::InitialNoise);
    (0..n)
        .map(|_| FeatureVector::new(rng::normal_vec(&mut r, 2)).expect("normal draws are finite"))
        .collect()
}

/// `n` draws from the data distribution, for MMD.
pub fn reference_samples(cfg: &ExperimentConfig, seed: u64, n: usize) -> Vec<FeatureVector> {
    cfg.gmm()
        .sample(&mut rng::stream(seed, Stream::ReferenceData), n)
        .iter()
        .map(|p| FeatureVector::from_slice(p).expect("mixture draws are finite"))
        .collect()
}

/// The trajectory sources of one seed: one per sample for the denoiser,
/// a single deterministic source otherwise.
pub fn build_sources(
    cfg: &ExperimentConfig,
    model: Option<&Arc<ToyDenoiser>>,
    seed: u64,
) -> Result<Vec<TrajectorySource>> {
    Ok(match cfg.source.kind {
        SourceKind::Denoiser => {
            let model = model
                .ok_or_else(|| FocaError::Precondition("denoiser source without a model".into()))?;
            initial_noise(seed, cfg.source.samples)
                .into_iter()
                .map(|x_init| TrajectorySource::Denoiser {
                    model: Arc::clone(model),
                    x_init,
                    sampler: cfg.source.sampler,
                })
                .collect()
        }
        SourceKind::Linear => vec![TrajectorySource::Linear(cfg.linear_system()?)],
        SourceKind::TwoScale | SourceKind::VanDerPol => {
            vec![TrajectorySource::Stiff(
                cfg.stiff_problem()?.expect("stiff kind"),
            )]
        }
    })
}

fn model_for(cfg: &ExperimentConfig) -> Result<Option<Arc<ToyDenoiser>>> {
    Ok(match cfg.source.kind {
        SourceKind::Denoiser => Some(Arc::new(cfg.load_denoiser()?)),
        _ => None,
    })
}

fn prepare_seed(
    cfg: &ExperimentConfig,
    grid: &TimeGrid,
    model: Option<&Arc<ToyDenoiser>>,
    seed: u64,
) -> Result<SeedData> {
    let sources = build_sources(cfg, model, seed)?;
    let mut truths = Vec::with_capacity(sources.len());
    let mut outputs = Vec::with_capacity(sources.len());
    for src in &sources {
        let (t, o) = Sampler::new(src, *grid)?.run_uncached()?;
        truths.push(t);
        outputs.push(o);
    }
    let steps = grid.steps();
    let (mut lte, mut stiffness) = (vec![0.0; steps], vec![0.0; steps]);
    for t in &truths {
        let (l, s) = trajectory_diagnostics(t, grid.h());
        for i in 0..steps {
            lte[i] += l[i];
            stiffness[i] += s[i];
        }
    }
    let n = truths.len() as f64;
    lte.iter_mut()
        .chain(stiffness.iter_mut())
        .for_each(|v| *v /= n);
    let reference = match cfg.source.kind {
        SourceKind::Denoiser => Some(reference_samples(cfg, seed, sources.len())),
        _ => None,
    };
    Ok(SeedData {
        sources,
        truths,
        outputs,
        reference,
        lte,
        stiffness,
    })
}

struct CellOutput {
    steps: Vec<StepRow>,
    summary: SummaryRow,
}

fn run_cell(
    cfg: &ExperimentConfig,
    grid: &TimeGrid,
    kind: PredictorKind,
    n: usize,
    seed: u64,
    data: &SeedData,
) -> Result<CellOutput> {
    let schedule = CacheSchedule::new(n, grid.steps(), cfg.schedule.warmup)?;
    let count = data.sources.len();
    let mut mean_err = vec![0.0; grid.steps()];
    let mut is_full = vec![false; grid.steps()];
    let mut deviation: Option<f64> = None;
    let mut finals = Vec::new();
    for (i, src) in data.sources.iter().enumerate() {
        let sampler = Sampler::new(src, *grid)?;
        let rep = run_cached_with_truth(
            &sampler,
            &data.truths[i],
            data.outputs[i].as_ref(),
            &schedule,
            kind,
        )?;
        for r in &rep.records {
            mean_err[r.step_index] += r.rel_error;
            is_full[r.step_index] = r.is_full;
        }
        if let Some(d) = rep.terminal_sample_deviation {
            *deviation.get_or_insert(0.0) += d;
        }
        if let Some(x) = rep.final_sample {
            finals.push(x);
        }
    }
    mean_err.iter_mut().for_each(|v| *v /= count as f64);
    if let Some(e) = mean_err.iter().find(|v| !v.is_finite()) {
        return Err(FocaError::NonFinite(format!("mean relative error {e}")));
    }
    let mmd = match &data.reference {
        Some(refd) if finals.len() == refd.len() => Some(mmd_sample_quality(&finals, refd)?),
        _ => None,
    };
    let prop1_pass = match cfg.source.kind {
        SourceKind::Linear => {
            let sys = cfg.linear_system()?;
            if sys.contraction_rho(grid.h()) < 1.0 {
                Some(
                    verify_proposition1(
                        &sys,
                        grid.h(),
                        cfg.schedule.warmup,
                        cfg.prop1.max_k,
                        kind,
                        cfg.prop1.slack,
                    )?
                    .verdict(),
                )
            } else {
                None
            }
        }
        _ => None,
    };
    let label = kind.to_string();
    let steps = (0..grid.steps())
        .map(|s| StepRow {
            experiment: cfg.name.clone(),
            kind: label.clone(),
            n,
            seed,
            step_index: s,
            is_full: is_full[s],
            rel_error: mean_err[s],
            lte: data.lte[s],
            stiffness_index: data.stiffness[s],
        })
        .collect();
    let summary = SummaryRow {
        experiment: cfg.name.clone(),
        kind: label,
        n,
        m: kind.taylor_order().unwrap_or(0),
        seed,
        evaluation_count: schedule.evaluation_count(),
        acceleration_ratio: schedule.acceleration_ratio(),
        terminal_deviation: deviation.map(|d| d / count as f64),
        mmd,
        prop1_pass,
        max_rel_error: mean_err.iter().cloned().fold(0.0, f64::max),
    };
    Ok(CellOutput { steps, summary })
}

/// Every (kind, N, seed) cell. Cells run on a rayon pool of `cfg.threads`
/// workers and are merged in config order, so the output does not depend
/// on the pool size. A failing cell is recorded and the rest continue.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let kinds = cfg.predictor_kinds()?;
    let grid = cfg.grid()?;
    let model = model_for(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| FocaError::config("threads", e.to_string()))?;
    pool.install(|| {
        let seeds: Vec<Result<SeedData>> = cfg
            .seeds
            .par_iter()
            .map(|&seed| prepare_seed(cfg, &grid, model.as_ref(), seed))
            .collect();
        let mut cells = Vec::new();
        for &kind in &kinds {
            for &n in &cfg.schedule.intervals {
                for (si, &seed) in cfg.seeds.iter().enumerate() {
                    cells.push((kind, n, si, seed));
                }
            }
        }
        let results: Vec<Result<CellOutput>> = cells
            .par_iter()
            .map(|&(kind, n, si, seed)| match &seeds[si] {
                Ok(data) => run_cell(cfg, &grid, kind, n, seed, data),
                Err(e) => Err(FocaError::Precondition(format!(
                    "reference run failed: {e}"
                ))),
            })
            .collect();
        let mut out = SweepOutput {
            steps: Vec::new(),
            summary: Vec::new(),
            failures: Vec::new(),
        };
        for ((kind, n, _, seed), r) in cells.into_iter().zip(results) {
            match r {
                Ok(c) => {
                    out.steps.extend(c.steps);
                    out.summary.push(c.summary);
                }
                Err(e) => out.failures.push(FailureRow {
                    experiment: cfg.name.clone(),
                    kind: kind.to_string(),
                    n,
                    seed,
                    error: e.to_string(),
                }),
            }
        }
        Ok(out)
    })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| FocaError::io(dir, e))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| FocaError::io(p, e))
}

/// Runs the sweep and writes `steps.csv`, `summary.csv` and `failures.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let out = run_sweep(cfg)?;
    write(
        &cfg.out,
        format::STEPS_FILE,
        &format::steps_csv(cfg, &out.steps)?,
    )?;
    write(
        &cfg.out,
        format::SUMMARY_FILE,
        &format::summary_csv(cfg, &out.summary)?,
    )?;
    write(
        &cfg.out,
        format::FAILURES_FILE,
        &format::failures_csv(cfg, &out.failures)?,
    )?;
    Ok(out)
}

/// Trains, writes the weights and the loss trace, then fails with
/// [`FocaError::NonConvergence`] if the held-out MSE missed the threshold.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    let (model, report) = train_denoiser(&cfg.train)?;
    write(&cfg.out, format::WEIGHTS_FILE, &model.to_text())?;
    write(
        &cfg.out,
        format::TRAIN_LOG_FILE,
        &format::train_log_csv(cfg, &report.log)?,
    )?;
    if !report.converged {
        return Err(FocaError::NonConvergence {
            mse: report.held_out_mse,
            threshold: report.threshold,
            steps: cfg.train.steps,
        });
    }
    Ok(report)
}

pub fn run_prop1(cfg: &ExperimentConfig) -> Result<BoundReport> {
    let q = &cfg.prop1;
    let sys = cfg.prop1_system()?;
    verify_proposition1(&sys, q.h, q.warmup, q.max_k, cfg.prop1_kind()?, q.slack).map_err(|e| {
        match e {
            FocaError::Precondition(m) => FocaError::config("prop1", m),
            other => other,
        }
    })
}

pub fn cmd_prop1(cfg: &ExperimentConfig) -> Result<BoundReport> {
    let report = run_prop1(cfg)?;
    write(
        &cfg.out,
        format::PROP1_FILE,
        &format::prop1_json(cfg, &report)?,
    )?;
    Ok(report)
}

/// Cached and uncached feature trajectories of one source, step by step.
#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub cached: Vec<FeatureVector>,
    pub uncached: Vec<FeatureVector>,
}

/// Uses the first seed; for the denoiser, draw `dump.sample` of its batch.
pub fn run_dump(cfg: &ExperimentConfig) -> Result<Dump> {
    let grid = cfg.grid()?;
    let model = model_for(cfg)?;
    let seed = cfg.seeds[0];
    let source = match cfg.source.kind {
        SourceKind::Denoiser => TrajectorySource::Denoiser {
            model: model.expect("denoiser model"),
            x_init: initial_noise(seed, cfg.dump.sample + 1)
                .pop()
                .expect("non-empty"),
            sampler: cfg.source.sampler,
        },
        _ => build_sources(cfg, None, seed)?.remove(0),
    };
    let sampler = Sampler::new(&source, grid)?;
    let (uncached, out) = sampler.run_uncached()?;
    let schedule = CacheSchedule::new(cfg.dump.interval, grid.steps(), cfg.schedule.warmup)?;
    let rep = run_cached_with_truth(
        &sampler,
        &uncached,
        out.as_ref(),
        &schedule,
        cfg.dump_kind()?,
    )?;
    Ok(Dump {
        cached: rep.records.into_iter().map(|r| r.used).collect(),
        uncached,
    })
}

pub fn cmd_dump(cfg: &ExperimentConfig) -> Result<Dump> {
    let d = run_dump(cfg)?;
    write(
        &cfg.out,
        format::TRAJECTORY_FILE,
        &format::trajectory_csv(cfg, &d.cached, &d.uncached)?,
    )?;
    Ok(d)
}
