//! Output files.
//!
//! Every CSV starts with two comment lines, then the column header:
//!
//! ```text
//! # foca-<kind> v<version>
//! # config <normalized config as single-line JSON>
//! ```
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every `f64`. Lines end in `\n`. JSON outputs carry the same information in
//! `format`, `version` and `config` keys.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::diagnostics::BoundReport;
use crate::error::{FocaError, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const STEPS_FILE: &str = "steps.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const PROP1_FILE: &str = "prop1.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const WEIGHTS_FILE: &str = "toy_denoiser.txt";

pub const STEPS_COLUMNS: [&str; 9] = [
    "experiment",
    "kind",
    "N",
    "seed",
    "step_index",
    "is_full",
    "rel_error",
    "lte",
    "stiffness_index",
];
pub const SUMMARY_COLUMNS: [&str; 11] = [
    "experiment",
    "kind",
    "N",
    "m",
    "seed",
    "evaluation_count",
    "acceleration_ratio",
    "terminal_deviation",
    "mmd",
    "prop1_pass",
    "max_rel_error",
];
pub const FAILURE_COLUMNS: [&str; 5] = ["experiment", "kind", "N", "seed", "error"];
pub const TRAIN_LOG_COLUMNS: [&str; 4] = ["step", "learning_rate", "train_mse", "held_out_mse"];

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub experiment: String,
    pub kind: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub step_index: usize,
    pub is_full: bool,
    pub rel_error: f64,
    pub lte: f64,
    pub stiffness_index: f64,
}

impl StepRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.kind.clone(),
            self.n.to_string(),
            self.seed.to_string(),
            self.step_index.to_string(),
            self.is_full.to_string(),
            fmt_f64(self.rel_error),
            fmt_f64(self.lte),
            fmt_f64(self.stiffness_index),
        ]
    }
}

/// `terminal_deviation` and `mmd` are empty for sources without a final
/// sample; `prop1_pass` is empty unless the source is a contractive linear
/// system. `m` is the Taylor order, 0 for the other kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub kind: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub evaluation_count: usize,
    pub acceleration_ratio: f64,
    pub terminal_deviation: Option<f64>,
    pub mmd: Option<f64>,
    pub prop1_pass: Option<bool>,
    pub max_rel_error: f64,
}

impl SummaryRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.kind.clone(),
            self.n.to_string(),
            self.m.to_string(),
            self.seed.to_string(),
            self.evaluation_count.to_string(),
            fmt_f64(self.acceleration_ratio),
            fmt_opt(self.terminal_deviation),
            fmt_opt(self.mmd),
            self.prop1_pass.map(|b| b.to_string()).unwrap_or_default(),
            fmt_f64(self.max_rel_error),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub experiment: String,
    pub kind: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub error: String,
}

impl FailureRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.kind.clone(),
            self.n.to_string(),
            self.seed.to_string(),
            self.error.clone(),
        ]
    }
}

pub fn steps_csv(cfg: &ExperimentConfig, rows: &[StepRow]) -> Result<String> {
    table(
        "steps",
        cfg,
        &STEPS_COLUMNS,
        rows.iter().map(StepRow::fields),
    )
}

pub fn summary_csv(cfg: &ExperimentConfig, rows: &[SummaryRow]) -> Result<String> {
    table(
        "summary",
        cfg,
        &SUMMARY_COLUMNS,
        rows.iter().map(SummaryRow::fields),
    )
}

pub fn failures_csv(cfg: &ExperimentConfig, rows: &[FailureRow]) -> Result<String> {
    table(
        "failures",
        cfg,
        &FAILURE_COLUMNS,
        rows.iter().map(FailureRow::fields),
    )
}

pub fn train_log_csv(
    cfg: &ExperimentConfig,
    rows: &[crate::dynamics::TrainLogRow],
) -> Result<String> {
    table(
        "train-log",
        cfg,
        &TRAIN_LOG_COLUMNS,
        rows.iter().map(|r| {
            vec![
                r.step.to_string(),
                fmt_f64(r.learning_rate),
                fmt_f64(r.train_mse),
                fmt_f64(r.held_out_mse),
            ]
        }),
    )
}

/// `step_index`, then `cached_i` and `uncached_i` for each component.
pub fn trajectory_csv(
    cfg: &ExperimentConfig,
    cached: &[crate::types::FeatureVector],
    uncached: &[crate::types::FeatureVector],
) -> Result<String> {
    let d = uncached.first().map(|f| f.dim()).unwrap_or(0);
    let mut header = vec!["step_index".to_string()];
    header.extend((0..d).map(|i| format!("cached_{i}")));
    header.extend((0..d).map(|i| format!("uncached_{i}")));
    let rows = cached.iter().zip(uncached).enumerate().map(|(s, (c, u))| {
        let mut r = vec![s.to_string()];
        r.extend(c.as_slice().iter().map(|v| fmt_f64(*v)));
        r.extend(u.as_slice().iter().map(|v| fmt_f64(*v)));
        r
    });
    table("trajectory", cfg, &header, rows)
}

fn preamble(kind: &str, cfg: &ExperimentConfig) -> String {
    format!(
        "# foca-{kind} v{FORMAT_VERSION}\n# config {}\n",
        cfg.normalized_json()
    )
}

fn table<H: AsRef<str>>(
    kind: &str,
    cfg: &ExperimentConfig,
    header: &[H],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(preamble(kind, cfg).into_bytes());
    let err = |e: csv::Error| FocaError::format(kind, e.to_string());
    w.write_record(header.iter().map(|h| h.as_ref()))
        .map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| FocaError::format(kind, e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| FocaError::format(kind, e.to_string()))
}

/// A parsed output table with its embedded config.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: serde_json::Value,
    pub rows: Vec<T>,
}

pub fn parse_steps(text: &str) -> Result<Loaded<StepRow>> {
    parse_table("steps", &STEPS_COLUMNS, text)
}

pub fn parse_summary(text: &str) -> Result<Loaded<SummaryRow>> {
    parse_table("summary", &SUMMARY_COLUMNS, text)
}

pub fn parse_failures(text: &str) -> Result<Loaded<FailureRow>> {
    parse_table("failures", &FAILURE_COLUMNS, text)
}

pub fn load_steps(path: &Path) -> Result<Loaded<StepRow>> {
    parse_steps(&read(path)?)
}

pub fn load_summary(path: &Path) -> Result<Loaded<SummaryRow>> {
    parse_summary(&read(path)?)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| FocaError::io(path, e))
}

/// Checks the version line, returns the embedded config and the CSV body.
fn split_preamble<'a>(kind: &str, text: &'a str) -> Result<(serde_json::Value, &'a str)> {
    let bad = |m: String| FocaError::format(kind, m);
    let (first, rest) = text
        .split_once('\n')
        .ok_or_else(|| bad("empty file".into()))?;
    let want = format!("# foca-{kind} v");
    let version = first
        .strip_prefix(&want)
        .ok_or_else(|| bad(format!("expected `{want}<n>` header, found `{first}`")))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let (second, body) = rest
        .split_once('\n')
        .ok_or_else(|| bad("missing config line".into()))?;
    let json = second
        .strip_prefix("# config ")
        .ok_or_else(|| bad("missing config line".into()))?;
    let config = serde_json::from_str(json).map_err(|e| bad(format!("embedded config: {e}")))?;
    Ok((config, body))
}

fn parse_table<T: DeserializeOwned>(kind: &str, columns: &[&str], text: &str) -> Result<Loaded<T>> {
    let (config, body) = split_preamble(kind, text)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r
        .headers()
        .map_err(|e| FocaError::format(kind, e.to_string()))?;
    if header.iter().ne(columns.iter().copied()) {
        return Err(FocaError::format(
            kind,
            format!("unexpected columns {header:?}"),
        ));
    }
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| FocaError::format(kind, e.to_string()))?;
    Ok(Loaded { config, rows })
}

/// Contents of `prop1.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Document {
    pub format: String,
    pub version: u32,
    pub config: serde_json::Value,
    pub report: BoundReport,
}

pub const PROP1_FORMAT: &str = "foca-prop1";

pub fn prop1_json(cfg: &ExperimentConfig, report: &BoundReport) -> Result<String> {
    let doc = Prop1Document {
        format: PROP1_FORMAT.into(),
        version: FORMAT_VERSION,
        config: serde_json::to_value(cfg).map_err(|e| FocaError::format("prop1", e.to_string()))?,
        report: report.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc)
        .map_err(|e| FocaError::format("prop1", e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_prop1(text: &str) -> Result<Prop1Document> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| FocaError::format("prop1", e.to_string()))?;
    if v.get("format").and_then(|f| f.as_str()) != Some(PROP1_FORMAT) {
        return Err(FocaError::format("prop1", "missing or wrong `format` tag"));
    }
    match v.get("version").and_then(|f| f.as_u64()) {
        Some(n) if n == FORMAT_VERSION as u64 => {}
        other => {
            return Err(FocaError::format(
                "prop1",
                format!("unsupported format version {other:?}"),
            ))
        }
    }
    serde_json::from_value(v).map_err(|e| FocaError::format("prop1", e.to_string()))
}

pub fn load_prop1(path: &Path) -> Result<Prop1Document> {
    parse_prop1(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: f64) -> SummaryRow {
        SummaryRow {
            experiment: "e".into(),
            kind: "foca".into(),
            n: 5,
            m: 0,
            seed: 3,
            evaluation_count: 11,
            acceleration_ratio: 50.0 / 11.0,
            terminal_deviation: Some(v),
            mmd: None,
            prop1_pass: Some(true),
            max_rel_error: 0.1,
        }
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [
            0.1,
            1.0 / 3.0,
            1e-300,
            6.02214076e23,
            -0.0,
            f64::MIN_POSITIVE,
            50.0 / 11.0,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
            assert_eq!(
                s.split('e').next().unwrap().trim_start_matches('-').len(),
                18
            );
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn summary_round_trip_and_layout() {
        let cfg = ExperimentConfig::default();
        let rows = vec![row(0.25), row(1.0 / 7.0)];
        let text = summary_csv(&cfg, &rows).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# foca-summary v1"));
        assert!(lines
            .next()
            .unwrap()
            .starts_with("# config {\"name\":\"default\""));
        assert_eq!(lines.next(), Some(SUMMARY_COLUMNS.join(",").as_str()));
        assert!(!text.contains('\r'));
        let back = parse_summary(&text).unwrap();
        assert_eq!(back.rows, rows);
        assert_eq!(back.config, serde_json::to_value(&cfg).unwrap());
    }

    #[test]
    fn unknown_versions_are_rejected() {
        let cfg = ExperimentConfig::default();
        let text = summary_csv(&cfg, &[row(0.5)])
            .unwrap()
            .replacen("v1", "v2", 1);
        assert!(matches!(
            parse_summary(&text),
            Err(FocaError::Format { .. })
        ));
        let steps = steps_csv(&cfg, &[]).unwrap();
        assert!(parse_summary(&steps).is_err());
        assert!(parse_steps(&steps).unwrap().rows.is_empty());
    }
}
