//! Two-hidden-layer noise-prediction network on a 2-D Gaussian mixture.
//!
//! Layout: `[x_t ; emb(t)] → W1 → SiLU → W2 → SiLU → W3 → ε̂`. The cached
//! feature is the first hidden activation (width [`HIDDEN`]).
//!
//! Weights file (text, UTF-8, `\n` line endings):
//!
//! ```text
//! foca-toy-denoiser <version>
//! x_dim <d_x>
//! embed_dim <e>
//! hidden <w>
//! steps <T>
//! beta_start <f64>
//! beta_end <f64>
//! w1 <rows> <cols>
//! <rows lines of cols values>
//! b1 <rows> 1
//! ...                       (w2, b2, w3, b3 in that order)
//! ```
//!
//! Matrices are row-major; floats are written with 17 significant digits so
//! a load/save round trip is bit-exact.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DiffusionSchedule;
use crate::error::{FocaError, Result};
use crate::rng::{self, Stream};
use crate::types::FeatureVector;

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "foca-toy-denoiser";
const BUNDLED_WEIGHTS: &str = include_str!("../../assets/toy_denoiser.txt");

pub const X_DIM: usize = 2;
pub const EMBED_DIM: usize = 8;
pub const HIDDEN: usize = 64;
const IN_DIM: usize = X_DIM + EMBED_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSpec {
    pub means: Vec<[f64; 2]>,
    pub std: f64,
}

impl Default for GmmSpec {
    fn default() -> Self {
        Self {
            means: vec![[-2.0, 0.0], [2.0, 0.0]],
            std: 0.3,
        }
    }
}

impl GmmSpec {
    /// Equal-weight mixture draw.
    pub fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| {
                let c = rng.random_range(0..self.means.len());
                let m = self.means[c];
                [
                    m[0] + self.std * rng::normal(rng),
                    m[1] + self.std * rng::normal(rng),
                ]
            })
            .collect()
    }

    /// `E[x0 | x_t]` under the forward marginal with cumulative coefficient `ab`.
    pub fn posterior_mean(&self, x: [f64; 2], ab: f64) -> [f64; 2] {
        let s2 = self.std * self.std;
        let var = ab * s2 + 1.0 - ab;
        let gain = ab.sqrt() * s2 / var;
        let logw: Vec<f64> = self
            .means
            .iter()
            .map(|m| {
                let dx = x[0] - ab.sqrt() * m[0];
                let dy = x[1] - ab.sqrt() * m[1];
                -(dx * dx + dy * dy) / (2.0 * var)
            })
            .collect();
        let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut out = [0.0; 2];
        for (m, wi) in self.means.iter().zip(&w) {
            for d in 0..2 {
                out[d] += wi / z * (m[d] + gain * (x[d] - ab.sqrt() * m[d]));
            }
        }
        out
    }
}

/// The training set for `seed`.
pub fn gmm_dataset(gmm: &GmmSpec, seed: u64, n: usize) -> Vec<[f64; 2]> {
    gmm.sample(&mut rng::stream(seed, Stream::Dataset), n)
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    schedule: DiffusionSchedule,
    /// Row-major `HIDDEN × IN_DIM`.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Row-major `HIDDEN × HIDDEN`.
    w2: Vec<f64>,
    b2: Vec<f64>,
    /// Row-major `X_DIM × HIDDEN`.
    w3: Vec<f64>,
    b3: Vec<f64>,
}

fn matvec(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(i, bi)| {
            let row = &w[i * cols..(i + 1) * cols];
            row.iter().zip(x).fold(*bi, |acc, (a, v)| acc + a * v)
        })
        .collect()
}

impl ToyDenoiser {
    /// Fan-in scaled Gaussian initialization.
    pub fn init(schedule: DiffusionSchedule, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = |rows: usize, cols: usize| {
            let s = (1.0 / cols as f64).sqrt();
            (0..rows * cols)
                .map(|_| s * rng::normal(rng))
                .collect::<Vec<_>>()
        };
        let w1 = layer(HIDDEN, IN_DIM);
        let w2 = layer(HIDDEN, HIDDEN);
        let w3 = layer(X_DIM, HIDDEN);
        Self {
            schedule,
            w1,
            b1: vec![0.0; HIDDEN],
            w2,
            b2: vec![0.0; HIDDEN],
            w3,
            b3: vec![0.0; X_DIM],
        }
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn feature_dim(&self) -> usize {
        HIDDEN
    }

    /// Sinusoidal embedding of `c = ln σ_t / 4`, `σ_t² = (1−ᾱ_t)/ᾱ_t`, at
    /// frequencies `1/4, 1/2, 1, 2`.
    pub fn embedding(&self, t: usize) -> Result<[f64; EMBED_DIM]> {
        let ab = self.schedule.alpha_bar(t)?;
        Ok(embed(ab))
    }

    /// First hidden activation: the cached feature.
    pub fn hidden1(&self, x_t: &FeatureVector, t: usize) -> Result<FeatureVector> {
        if x_t.dim() != X_DIM {
            return Err(FocaError::DimMismatch {
                expected: X_DIM,
                got: x_t.dim(),
            });
        }
        let e = self.embedding(t)?;
        let mut input = [0.0; IN_DIM];
        input[..X_DIM].copy_from_slice(x_t.as_slice());
        input[X_DIM..].copy_from_slice(&e);
        let z = matvec(&self.w1, &self.b1, &input);
        FeatureVector::new(z.into_iter().map(silu).collect())
            .map_err(|_| FocaError::NonFinite(format!("hidden activation at t = {t}")))
    }

    /// Remaining layers applied to a (possibly substituted) first activation.
    pub fn head(&self, h1: &FeatureVector) -> Result<FeatureVector> {
        if h1.dim() != HIDDEN {
            return Err(FocaError::DimMismatch {
                expected: HIDDEN,
                got: h1.dim(),
            });
        }
        let a2: Vec<f64> = matvec(&self.w2, &self.b2, h1.as_slice())
            .into_iter()
            .map(silu)
            .collect();
        FeatureVector::new(matvec(&self.w3, &self.b3, &a2))
            .map_err(|_| FocaError::NonFinite("denoiser output".into()))
    }

    pub fn eps(&self, x_t: &FeatureVector, t: usize) -> Result<FeatureVector> {
        self.head(&self.hidden1(x_t, t)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MAGIC} {WEIGHTS_FORMAT_VERSION}").unwrap();
        writeln!(s, "x_dim {X_DIM}").unwrap();
        writeln!(s, "embed_dim {EMBED_DIM}").unwrap();
        writeln!(s, "hidden {HIDDEN}").unwrap();
        writeln!(s, "steps {}", self.schedule.steps()).unwrap();
        writeln!(s, "beta_start {:.16e}", self.schedule.beta_start()).unwrap();
        writeln!(s, "beta_end {:.16e}", self.schedule.beta_end()).unwrap();
        let mut block = |name: &str, v: &[f64], rows: usize, cols: usize| {
            writeln!(s, "{name} {rows} {cols}").unwrap();
            for r in 0..rows {
                let line: Vec<String> = v[r * cols..(r + 1) * cols]
                    .iter()
                    .map(|x| format!("{x:.16e}"))
                    .collect();
                writeln!(s, "{}", line.join(" ")).unwrap();
            }
        };
        block("w1", &self.w1, HIDDEN, IN_DIM);
        block("b1", &self.b1, HIDDEN, 1);
        block("w2", &self.w2, HIDDEN, HIDDEN);
        block("b2", &self.b2, HIDDEN, 1);
        block("w3", &self.w3, X_DIM, HIDDEN);
        block("b3", &self.b3, X_DIM, 1);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "denoiser weights";
        let bad = |m: String| FocaError::format(ctx, m);
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| bad(format!("unexpected end of file, expected {what}")))
        };
        let (_, header) = next("header")?;
        let mut hp = header.split_whitespace();
        if hp.next() != Some(MAGIC) {
            return Err(bad("not a denoiser weights file".into()));
        }
        let version: u32 = hp
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing version".into()))?;
        if version != WEIGHTS_FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut field = |key: &str| -> Result<String> {
            let (n, l) = next(key)?;
            let mut p = l.split_whitespace();
            if p.next() != Some(key) {
                return Err(bad(format!("line {}: expected `{key}`", n + 1)));
            }
            p.next()
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("line {}: missing value", n + 1)))
        };
        let int = |v: String, key: &str| -> Result<usize> {
            v.parse().map_err(|_| bad(format!("bad integer for {key}")))
        };
        let float = |v: String, key: &str| -> Result<f64> {
            v.parse().map_err(|_| bad(format!("bad float for {key}")))
        };
        for (key, want) in [
            ("x_dim", X_DIM),
            ("embed_dim", EMBED_DIM),
            ("hidden", HIDDEN),
        ] {
            let got = int(field(key)?, key)?;
            if got != want {
                return Err(bad(format!("{key} = {got}, this build supports {want}")));
            }
        }
        let steps = int(field("steps")?, "steps")?;
        let beta_start = float(field("beta_start")?, "beta_start")?;
        let beta_end = float(field("beta_end")?, "beta_end")?;
        let schedule = DiffusionSchedule::linear_beta(steps, beta_start, beta_end)?;

        let mut read_block = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            let (n, l) = next(name)?;
            let p: Vec<&str> = l.split_whitespace().collect();
            if p != [name, &rows.to_string(), &cols.to_string()] {
                return Err(bad(format!(
                    "line {}: expected `{name} {rows} {cols}`",
                    n + 1
                )));
            }
            let mut out = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, l) = next(name)?;
                let row: Vec<f64> = l
                    .split_whitespace()
                    .map(|x| x.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(format!("line {}: bad number", n + 1)))?;
                if row.len() != cols || row.iter().any(|v| !v.is_finite()) {
                    return Err(bad(format!(
                        "line {}: expected {cols} finite values",
                        n + 1
                    )));
                }
                out.extend(row);
            }
            Ok(out)
        };
        let w1 = read_block("w1", HIDDEN, IN_DIM)?;
        let b1 = read_block("b1", HIDDEN, 1)?;
        let w2 = read_block("w2", HIDDEN, HIDDEN)?;
        let b2 = read_block("b2", HIDDEN, 1)?;
        let w3 = read_block("w3", X_DIM, HIDDEN)?;
        let b3 = read_block("b3", X_DIM, 1)?;
        if let Some((n, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(bad(format!("line {}: trailing content `{l}`", n + 1)));
        }
        Ok(Self {
            schedule,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FocaError::io(path, e))?;
        Self::from_text(&text)
    }

    /// Weights shipped with the crate: the default training config, seed 0.
    pub fn bundled() -> Self {
        Self::from_text(BUNDLED_WEIGHTS).expect("bundled weights parse")
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| FocaError::io(path, e))
    }
}

fn embed(alpha_bar: f64) -> [f64; EMBED_DIM] {
    let c = 0.125 * ((1.0 - alpha_bar) / alpha_bar).ln();
    let mut e = [0.0; EMBED_DIM];
    for j in 0..EMBED_DIM / 2 {
        let w = 0.25 * (1u32 << j) as f64;
        e[2 * j] = (w * c).sin();
        e[2 * j + 1] = (w * c).cos();
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub dataset_size: usize,
    pub held_out: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate is multiplied by `lr_decay` at each of these fractions of `steps`.
    pub decay_at: Vec<f64>,
    pub lr_decay: f64,
    pub mse_threshold: f64,
    pub log_every: usize,
    pub gmm: GmmSpec,
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

/// Held-out threshold. The exact posterior-mean predictor scores about 0.221
/// on the default mixture and schedule, so no network can go much lower.
pub const DEFAULT_MSE_THRESHOLD: f64 = 0.23;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset_size: 10_000,
            held_out: 1_000,
            steps: 20_000,
            batch_size: 128,
            learning_rate: 0.05,
            decay_at: vec![0.5, 0.75, 0.9],
            lr_decay: 0.3,
            mse_threshold: DEFAULT_MSE_THRESHOLD,
            log_every: 500,
            gmm: GmmSpec::default(),
            diffusion_steps: super::diffusion::DEFAULT_STEPS,
            beta_start: super::diffusion::DEFAULT_BETA_START,
            beta_end: super::diffusion::DEFAULT_BETA_END,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub learning_rate: f64,
    pub train_mse: f64,
    pub held_out_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub log: Vec<TrainLogRow>,
    pub held_out_mse: f64,
    pub bayes_floor: f64,
    pub threshold: f64,
    pub converged: bool,
}

/// Fixed `(x0, t, ε)` evaluation triples.
struct HeldOut {
    x0: Vec<[f64; 2]>,
    t: Vec<usize>,
    eps: Vec<[f64; 2]>,
}

impl HeldOut {
    fn draw(x0: Vec<[f64; 2]>, steps: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, Stream::HeldOut);
        let t = (0..x0.len()).map(|_| r.random_range(1..=steps)).collect();
        let eps = (0..x0.len())
            .map(|_| [rng::normal(&mut r), rng::normal(&mut r)])
            .collect();
        Self { x0, t, eps }
    }

    fn mse(
        &self,
        schedule: &DiffusionSchedule,
        predict: impl Fn([f64; 2], usize) -> [f64; 2],
    ) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.x0.len() {
            let ab = schedule.alpha_bar(self.t[i]).unwrap();
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            let xt = [
                a * self.x0[i][0] + b * self.eps[i][0],
                a * self.x0[i][1] + b * self.eps[i][1],
            ];
            let p = predict(xt, self.t[i]);
            acc += (p[0] - self.eps[i][0]).powi(2) + (p[1] - self.eps[i][1]).powi(2);
        }
        acc / (2 * self.x0.len()) as f64
    }
}

/// Error of the exact posterior-mean noise predictor on `cfg`'s held-out triples.
pub fn bayes_floor_mse(cfg: &TrainConfig) -> Result<f64> {
    let schedule =
        DiffusionSchedule::linear_beta(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)?;
    let held = held_out(cfg);
    Ok(held.mse(&schedule, |x, t| {
        let ab = schedule.alpha_bar(t).unwrap();
        let m = cfg.gmm.posterior_mean(x, ab);
        let s = (1.0 - ab).sqrt();
        [(x[0] - ab.sqrt() * m[0]) / s, (x[1] - ab.sqrt() * m[1]) / s]
    }))
}

fn held_out(cfg: &TrainConfig) -> HeldOut {
    let data = gmm_dataset(&cfg.gmm, cfg.seed, cfg.dataset_size);
    let split = cfg.dataset_size.saturating_sub(cfg.held_out);
    HeldOut::draw(data[split..].to_vec(), cfg.diffusion_steps, cfg.seed)
}

/// Minibatch SGD on the noise-prediction objective. Always returns the
/// trained network; `report.converged` says whether the held-out error met
/// the threshold.
pub fn train_denoiser(cfg: &TrainConfig) -> Result<(ToyDenoiser, TrainReport)> {
    if cfg.held_out == 0 || cfg.held_out >= cfg.dataset_size {
        return Err(FocaError::config(
            "train.held_out",
            "must be in [1, dataset_size)",
        ));
    }
    if cfg.batch_size == 0 {
        return Err(FocaError::config("train.batch_size", "must be positive"));
    }
    let schedule =
        DiffusionSchedule::linear_beta(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)?;
    let data = gmm_dataset(&cfg.gmm, cfg.seed, cfg.dataset_size);
    let split = cfg.dataset_size - cfg.held_out;
    let train = &data[..split];
    let held = HeldOut::draw(data[split..].to_vec(), cfg.diffusion_steps, cfg.seed);
    let floor = bayes_floor_mse(cfg)?;

    let mut net = ToyDenoiser::init(
        schedule.clone(),
        &mut rng::stream(cfg.seed, Stream::TrainInit),
    );
    let mut batches = rng::stream(cfg.seed, Stream::TrainBatches);

    let mut w1 = DMatrix::from_row_slice(HIDDEN, IN_DIM, &net.w1);
    let mut b1 = DVector::from_column_slice(&net.b1);
    let mut w2 = DMatrix::from_row_slice(HIDDEN, HIDDEN, &net.w2);
    let mut b2 = DVector::from_column_slice(&net.b2);
    let mut w3 = DMatrix::from_row_slice(X_DIM, HIDDEN, &net.w3);
    let mut b3 = DVector::from_column_slice(&net.b3);

    let embeds: Vec<[f64; EMBED_DIM]> = (1..=cfg.diffusion_steps)
        .map(|t| embed(schedule.alpha_bar(t).unwrap()))
        .collect();

    let sync = |net: &mut ToyDenoiser,
                w1: &DMatrix<f64>,
                b1: &DVector<f64>,
                w2: &DMatrix<f64>,
                b2: &DVector<f64>,
                w3: &DMatrix<f64>,
                b3: &DVector<f64>| {
        net.w1 = w1.transpose().as_slice().to_vec();
        net.b1 = b1.as_slice().to_vec();
        net.w2 = w2.transpose().as_slice().to_vec();
        net.b2 = b2.as_slice().to_vec();
        net.w3 = w3.transpose().as_slice().to_vec();
        net.b3 = b3.as_slice().to_vec();
    };
    let eval = |net: &ToyDenoiser| {
        held.mse(&schedule, |x, t| {
            let e = net.eps(&FeatureVector::from_slice(&x).unwrap(), t).unwrap();
            [e.as_slice()[0], e.as_slice()[1]]
        })
    };

    let bsz = cfg.batch_size;
    let mut log = Vec::new();
    let mut input = DMatrix::<f64>::zeros(IN_DIM, bsz);
    let mut target = DMatrix::<f64>::zeros(X_DIM, bsz);
    let mut running = 0.0;
    let mut running_n = 0usize;
    for step in 0..cfg.steps {
        let frac = step as f64 / cfg.steps as f64;
        let lr = cfg.learning_rate
            * cfg
                .lr_decay
                .powi(cfg.decay_at.iter().filter(|d| frac >= **d).count() as i32);
        for j in 0..bsz {
            let x0 = train[batches.random_range(0..train.len())];
            let t = batches.random_range(1..=cfg.diffusion_steps);
            let e = [rng::normal(&mut batches), rng::normal(&mut batches)];
            let ab = schedule.alpha_bar(t)?;
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            input[(0, j)] = a * x0[0] + b * e[0];
            input[(1, j)] = a * x0[1] + b * e[1];
            for k in 0..EMBED_DIM {
                input[(X_DIM + k, j)] = embeds[t - 1][k];
            }
            target[(0, j)] = e[0];
            target[(1, j)] = e[1];
        }
        let mut z1 = &w1 * &input;
        for mut c in z1.column_iter_mut() {
            c += &b1;
        }
        let a1 = z1.map(silu);
        let mut z2 = &w2 * &a1;
        for mut c in z2.column_iter_mut() {
            c += &b2;
        }
        let a2 = z2.map(silu);
        let mut out = &w3 * &a2;
        for mut c in out.column_iter_mut() {
            c += &b3;
        }
        let diff = &out - &target;
        running += diff.norm_squared() / (X_DIM * bsz) as f64;
        running_n += 1;

        let d_out = diff * (2.0 / (X_DIM * bsz) as f64);
        let g_w3 = &d_out * a2.transpose();
        let g_b3 = d_out.column_sum();
        let d_a2 = w3.transpose() * &d_out;
        let d_z2 = d_a2.zip_map(&z2, |g, z| g * silu_grad(z));
        let g_w2 = &d_z2 * a1.transpose();
        let g_b2 = d_z2.column_sum();
        let d_a1 = w2.transpose() * &d_z2;
        let d_z1 = d_a1.zip_map(&z1, |g, z| g * silu_grad(z));
        let g_w1 = &d_z1 * input.transpose();
        let g_b1 = d_z1.column_sum();

        w3 -= g_w3 * lr;
        b3 -= g_b3 * lr;
        w2 -= g_w2 * lr;
        b2 -= g_b2 * lr;
        w1 -= g_w1 * lr;
        b1 -= g_b1 * lr;

        if cfg.log_every > 0 && (step + 1) % cfg.log_every == 0 {
            sync(&mut net, &w1, &b1, &w2, &b2, &w3, &b3);
            log.push(TrainLogRow {
                step: step + 1,
                learning_rate: lr,
                train_mse: running / running_n as f64,
                held_out_mse: eval(&net),
            });
            running = 0.0;
            running_n = 0;
        }
    }
    sync(&mut net, &w1, &b1, &w2, &b2, &w3, &b3);
    let final_mse = eval(&net);
    if !final_mse.is_finite() {
        return Err(FocaError::NonFinite("held-out loss".into()));
    }
    let converged = cfg.steps > 0 && final_mse < cfg.mse_threshold;
    Ok((
        net,
        TrainReport {
            log,
            held_out_mse: final_mse,
            bayes_floor: floor,
            threshold: cfg.mse_threshold,
            converged,
        },
    ))
}
