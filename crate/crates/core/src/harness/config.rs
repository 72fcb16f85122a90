use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    GmmSpec, LinearSystem, ReverseSampler, StiffTestProblem, ToyDenoiser, TrainConfig,
};
use crate::error::{FocaError, Result};
use crate::predictors::PredictorKind;
use crate::types::{CacheSchedule, FeatureVector, TimeGrid, DEFAULT_WARMUP};

/// Everything one command needs. Loaded from TOML, patched by flags, then
/// validated as a whole before any computation starts.
///
/// `out` and `threads` change where and how a run executes, never what it
/// produces, so they are left out of the copy embedded in output files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(skip_serializing)]
    pub out: PathBuf,
    /// Rayon pool size for sweeps; 0 uses the rayon default.
    #[serde(skip_serializing)]
    pub threads: usize,
    pub seeds: Vec<u64>,
    pub source: SourceConfig,
    pub schedule: ScheduleConfig,
    pub predictors: PredictorConfig,
    pub train: TrainConfig,
    pub prop1: Prop1Config,
    pub dump: DumpConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            out: PathBuf::from("out"),
            threads: 0,
            seeds: vec![0],
            source: SourceConfig::default(),
            schedule: ScheduleConfig::default(),
            predictors: PredictorConfig::default(),
            train: TrainConfig::default(),
            prop1: Prop1Config::default(),
            dump: DumpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Denoiser,
    Linear,
    TwoScale,
    VanDerPol,
}

/// Flat on purpose: a single `--override source.kind=linear` must not
/// require rewriting a nested table. Fields irrelevant to `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub steps: usize,
    pub h: f64,
    /// Denoiser weights file; absent means the bundled weights.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    pub sampler: ReverseSampler,
    /// Trajectories per denoiser cell, each from its own initial noise draw.
    pub samples: usize,
    /// Row-major system matrix for `linear`.
    pub matrix: Vec<f64>,
    /// Initial state for the analytic sources.
    pub initial: Vec<f64>,
    pub lambda_fast: f64,
    pub lambda_slow: f64,
    pub mu: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            kind: SourceKind::Denoiser,
            steps: 50,
            h: 1.0,
            weights: None,
            sampler: ReverseSampler::Ddim,
            samples: 64,
            matrix: vec![-0.1, 0.5, -0.5, -0.1],
            initial: vec![1.0, 0.0],
            lambda_fast: -50.0,
            lambda_slow: -0.1,
            mu: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub intervals: Vec<usize>,
    pub warmup: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            intervals: vec![1, 2, 3, 5, 7],
            warmup: DEFAULT_WARMUP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// `reuse`, `taylor`, `taylorM`, `bdf2`, `foca`. Plain `taylor` takes
    /// `taylor_order`; normalization rewrites it to `taylorM`.
    pub kinds: Vec<String>,
    pub taylor_order: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kinds: ["reuse", "taylor", "bdf2", "foca"]
                .map(String::from)
                .to_vec(),
            taylor_order: 2,
        }
    }
}

/// Contraction-bound check on a diagonal system with prescribed per-step
/// contraction factors, or on an explicit matrix when `matrix` is non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prop1Config {
    pub factors: Vec<f64>,
    pub matrix: Vec<f64>,
    pub initial: Vec<f64>,
    pub h: f64,
    pub warmup: usize,
    pub max_k: usize,
    pub kind: String,
    pub slack: f64,
}

impl Default for Prop1Config {
    fn default() -> Self {
        Self {
            factors: vec![0.5, 0.25],
            matrix: Vec::new(),
            initial: vec![1.0, -2.0],
            h: 1.0,
            warmup: DEFAULT_WARMUP,
            max_k: 20,
            kind: "foca".into(),
            slack: crate::diagnostics::DEFAULT_SLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpConfig {
    pub kind: String,
    pub interval: usize,
    /// Index of the initial-noise draw for denoiser sources.
    pub sample: usize,
}

impl Default for DumpConfig {
    fn default() -> Self {
        Self {
            kind: "foca".into(),
            interval: 5,
            sample: 0,
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    /// Replaces both `seeds` and `train.seed`.
    pub seed: Option<u64>,
    /// `dotted.key=value`, value parsed as a TOML literal, else as a string.
    pub assignments: Vec<String>,
}

impl ExperimentConfig {
    /// File (if any), then `key=value` assignments, then `--seed`/`--out`,
    /// then normalization and validation.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| FocaError::io(p, e))?;
                text.parse::<toml::Table>().map_err(|e| {
                    FocaError::config(p.display().to_string(), e.message().to_string())
                })?
            }
            None => toml::Table::new(),
        };
        for a in &overrides.assignments {
            apply_assignment(&mut table, a)?;
        }
        let mut cfg: ExperimentConfig =
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| {
                    FocaError::config(error_field(&e), e.message().to_string())
                })?;
        if let Some(seed) = overrides.seed {
            cfg.seeds = vec![seed];
            cfg.train.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        cfg.normalize()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| FocaError::config(error_field(&e), e.message().to_string()))?;
        cfg.normalize()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves predictor names to their canonical spelling.
    fn normalize(&mut self) -> Result<()> {
        let kinds = self.predictor_kinds()?;
        self.predictors.kinds = kinds.iter().map(|k| k.to_string()).collect();
        self.prop1.kind = self.parse_kind("prop1.kind", &self.prop1.kind)?.to_string();
        self.dump.kind = self.parse_kind("dump.kind", &self.dump.kind)?.to_string();
        Ok(())
    }

    fn parse_kind(&self, field: &str, name: &str) -> Result<PredictorKind> {
        if name == "taylor" {
            return Ok(PredictorKind::Taylor {
                order: self.predictors.taylor_order,
            });
        }
        name.parse::<PredictorKind>()
            .map_err(|e| FocaError::config(field, e.to_string()))
    }

    pub fn predictor_kinds(&self) -> Result<Vec<PredictorKind>> {
        self.predictors
            .kinds
            .iter()
            .map(|k| self.parse_kind("predictors.kinds", k))
            .collect()
    }

    pub fn prop1_kind(&self) -> Result<PredictorKind> {
        self.parse_kind("prop1.kind", &self.prop1.kind)
    }

    pub fn dump_kind(&self) -> Result<PredictorKind> {
        self.parse_kind("dump.kind", &self.dump.kind)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: String| Err(FocaError::config(f, m));
        if self.name.is_empty() || self.name.contains([',', '"', '\n', '\r']) {
            return bad(
                "name",
                format!(
                    "{:?} must be non-empty without commas, quotes or newlines",
                    self.name
                ),
            );
        }
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required".into());
        }
        if has_duplicates(&self.seeds) {
            return bad("seeds", format!("duplicate entries in {:?}", self.seeds));
        }
        let s = &self.source;
        if s.steps < 3 {
            return bad(
                "source.steps",
                format!("{} is below the minimum of 3", s.steps),
            );
        }
        if !(s.h > 0.0 && s.h.is_finite()) {
            return bad("source.h", format!("{} must be positive and finite", s.h));
        }
        if s.samples == 0 {
            return bad("source.samples", "must be at least 1".into());
        }
        match s.kind {
            SourceKind::Linear => {
                if s.initial.is_empty() || s.matrix.len() != s.initial.len() * s.initial.len() {
                    return bad(
                        "source.matrix",
                        format!(
                            "{} entries do not form a square matrix for a {}-dim initial state",
                            s.matrix.len(),
                            s.initial.len()
                        ),
                    );
                }
            }
            SourceKind::TwoScale | SourceKind::VanDerPol => {
                if s.initial.len() != 2 {
                    return bad(
                        "source.initial",
                        format!("needs 2 components, got {}", s.initial.len()),
                    );
                }
            }
            SourceKind::Denoiser => {}
        }
        if self.schedule.intervals.is_empty() {
            return bad(
                "schedule.intervals",
                "at least one interval is required".into(),
            );
        }
        if has_duplicates(&self.schedule.intervals) {
            return bad(
                "schedule.intervals",
                format!("duplicate entries in {:?}", self.schedule.intervals),
            );
        }
        for &n in &self.schedule.intervals {
            CacheSchedule::new(n, s.steps, self.schedule.warmup)
                .map_err(|e| FocaError::config("schedule", e.to_string()))?;
        }
        let p = &self.predictors;
        if p.taylor_order == 0 || p.taylor_order > 4 {
            return bad(
                "predictors.taylor_order",
                format!("{} outside [1, 4]", p.taylor_order),
            );
        }
        let kinds = self.predictor_kinds()?;
        if kinds.is_empty() {
            return bad(
                "predictors.kinds",
                "at least one predictor is required".into(),
            );
        }
        if has_duplicates(&kinds) {
            return bad(
                "predictors.kinds",
                format!("duplicate entries in {:?}", p.kinds),
            );
        }
        let q = &self.prop1;
        if q.matrix.is_empty() {
            if q.factors.is_empty() || q.factors.len() != q.initial.len() {
                return bad(
                    "prop1.factors",
                    format!(
                        "{} factors for a {}-dim initial state",
                        q.factors.len(),
                        q.initial.len()
                    ),
                );
            }
        } else if q.initial.is_empty() || q.matrix.len() != q.initial.len() * q.initial.len() {
            return bad(
                "prop1.matrix",
                format!(
                    "{} entries for a {}-dim initial state",
                    q.matrix.len(),
                    q.initial.len()
                ),
            );
        }
        if !(q.h > 0.0 && q.h.is_finite()) {
            return bad("prop1.h", format!("{} must be positive and finite", q.h));
        }
        if !(q.slack >= 1.0 && q.slack.is_finite()) {
            return bad(
                "prop1.slack",
                format!("{} must be finite and at least 1", q.slack),
            );
        }
        if self.dump.interval == 0 {
            return bad("dump.interval", "must be at least 1".into());
        }
        CacheSchedule::new(self.dump.interval, s.steps, self.schedule.warmup)
            .map_err(|e| FocaError::config("dump.interval", e.to_string()))?;
        if s.kind == SourceKind::Denoiser && self.dump.sample >= s.samples {
            return bad(
                "dump.sample",
                format!(
                    "{} not below source.samples = {}",
                    self.dump.sample, s.samples
                ),
            );
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.source.steps, self.source.h)
    }

    /// The denoiser named by `source.weights`, or the bundled one. Its
    /// schedule length must match `source.steps`.
    pub fn load_denoiser(&self) -> Result<ToyDenoiser> {
        let model = match &self.source.weights {
            Some(p) => ToyDenoiser::load(p)?,
            None => ToyDenoiser::bundled(),
        };
        if model.schedule().steps() != self.source.steps {
            return Err(FocaError::config(
                "source.steps",
                format!(
                    "{} differs from the denoiser's {} diffusion steps",
                    self.source.steps,
                    model.schedule().steps()
                ),
            ));
        }
        Ok(model)
    }

    /// Linear system described by `source` (kind `linear`).
    pub fn linear_system(&self) -> Result<LinearSystem> {
        LinearSystem::new(
            self.source.matrix.clone(),
            FeatureVector::from_slice(&self.source.initial)?,
        )
    }

    pub fn stiff_problem(&self) -> Result<Option<StiffTestProblem>> {
        let s = &self.source;
        let init = || [s.initial[0], s.initial[1]];
        Ok(match s.kind {
            SourceKind::TwoScale => Some(
                StiffTestProblem::two_scale(s.lambda_fast, s.lambda_slow, init())
                    .map_err(|e| FocaError::config("source.lambda_fast", e.to_string()))?,
            ),
            SourceKind::VanDerPol => Some(
                StiffTestProblem::van_der_pol(s.mu, init())
                    .map_err(|e| FocaError::config("source.mu", e.to_string()))?,
            ),
            _ => None,
        })
    }

    /// System checked by the `prop1` command.
    pub fn prop1_system(&self) -> Result<LinearSystem> {
        let q = &self.prop1;
        let init = FeatureVector::from_slice(&q.initial)?;
        if q.matrix.is_empty() {
            LinearSystem::with_step_factors(&q.factors, q.h, init)
                .map_err(|e| FocaError::config("prop1.factors", e.to_string()))
        } else {
            LinearSystem::new(q.matrix.clone(), init)
        }
    }

    pub fn gmm(&self) -> &GmmSpec {
        &self.train.gmm
    }

    /// Single-line JSON of the normalized config, as embedded in outputs.
    pub fn normalized_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn has_duplicates<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[..i].contains(a))
}

fn error_field(e: &toml::de::Error) -> String {
    // toml reports the offending key inside the message; keep it whole
    let m = e.message();
    m.split('`').nth(1).unwrap_or("config").to_string()
}

fn apply_assignment(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| FocaError::config(assignment, "override must have the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if key.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(FocaError::config(key, "malformed key"));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| FocaError::config(key, format!("`{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
