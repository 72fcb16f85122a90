//! Byte-level output contracts. Regenerate with `FOCA_UPDATE_GOLDEN=1` after
//! an intentional format change, and review the diff.

use std::path::PathBuf;

use foca::harness::format::{parse_steps, parse_summary, steps_csv, summary_csv};
use foca::harness::{run_sweep, ExperimentConfig};

const CONFIG: &str = r#"
name = "golden"
seeds = [0]

[source]
kind = "linear"
steps = 8
h = 0.5
matrix = [-0.5]
initial = [2.0]

[schedule]
intervals = [1, 3]
warmup = 2

[predictors]
kinds = ["reuse", "taylor", "bdf2", "foca"]
"#;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn check(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("FOCA_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert!(want == actual, "{name} differs from the golden copy");
}

#[test]
fn linear_sweep_tables_match_golden_files() {
    let cfg = ExperimentConfig::from_toml_str(CONFIG).unwrap();
    let out = run_sweep(&cfg).unwrap();
    let steps = steps_csv(&cfg, &out.steps).unwrap();
    let summary = summary_csv(&cfg, &out.summary).unwrap();
    check("steps.csv", &steps);
    check("summary.csv", &summary);
    assert_eq!(parse_steps(&steps).unwrap().rows, out.steps);
    assert_eq!(parse_summary(&summary).unwrap().rows, out.summary);
}

#[test]
fn golden_values_match_hand_derivations() {
    let cfg = ExperimentConfig::from_toml_str(CONFIG).unwrap();
    let out = run_sweep(&cfg).unwrap();
    // full steps at N=3: 0, 1, 2, 5; reuse after the full step f gives
    // |F_f − F_s| / F_s = e^{0.25 (s − f)} − 1 on F = 2 e^{−0.25 s}.
    // Tolerances absorb the 1e-12 floor in the relative-error denominator.
    let reuse: Vec<_> = out
        .steps
        .iter()
        .filter(|r| r.kind == "reuse" && r.n == 3)
        .collect();
    let full: Vec<usize> = reuse
        .iter()
        .filter(|r| r.is_full)
        .map(|r| r.step_index)
        .collect();
    assert_eq!(full, [0, 1, 2, 5]);
    for (s, f) in [(3, 2), (4, 2), (6, 5), (7, 5)] {
        let want = (0.25 * (s - f) as f64).exp() - 1.0;
        assert!((reuse[s].rel_error - want).abs() < 1e-11, "step {s}");
    }
    // 8 steps, 4 evaluations
    let row = out
        .summary
        .iter()
        .find(|r| r.kind == "foca" && r.n == 3)
        .unwrap();
    assert_eq!((row.evaluation_count, row.acceleration_ratio), (4, 2.0));
    assert_eq!(row.prop1_pass, Some(true));
    assert!(row.terminal_deviation.is_none() && row.mmd.is_none());
    // BDF2 and FoCa coincide inside the first interval: the two newest
    // features are both full computations, so D equals the full-step slope
    let b: Vec<_> = out
        .steps
        .iter()
        .filter(|r| r.kind == "bdf2" && r.n == 3)
        .collect();
    let f: Vec<_> = out
        .steps
        .iter()
        .filter(|r| r.kind == "foca" && r.n == 3)
        .collect();
    assert!((b[3].rel_error - f[3].rel_error).abs() < 1e-15);
    // linear extrapolation from (1, 2): 2F_2 − F_1 against F_3
    let e = |s: f64| 2.0 * (-0.25 * s).exp();
    let want = ((2.0 * e(2.0) - e(1.0)) - e(3.0)).abs() / e(3.0);
    assert!((f[3].rel_error - want).abs() < 1e-11);
}
