//! A full method × interval sweep on the toy denoiser, built in code rather
//! than through the CLI, printed as a table.
//!
//! `cargo run --release --example sweep -- [samples]`

use foca::harness::{run_sweep, ExperimentConfig, Overrides};

fn main() -> foca::Result<()> {
    let samples = std::env::args().nth(1).unwrap_or_else(|| "256".into());
    let cfg = ExperimentConfig::load(
        None,
        &Overrides {
            assignments: vec![format!("source.samples={samples}")],
            ..Default::default()
        },
    )?;
    let out = run_sweep(&cfg)?;
    println!("    kind  N  speedup  max rel err  deviation       mmd");
    for r in &out.summary {
        println!(
            "{:>8} {:>2} {:>7.2}x {:>12.3e} {:>10.3e} {:>9.2e}",
            r.kind,
            r.n,
            r.acceleration_ratio,
            r.max_rel_error,
            r.terminal_deviation.unwrap_or(f64::NAN),
            r.mmd.unwrap_or(f64::NAN)
        );
    }
    for f in &out.failures {
        println!("failed: {} N={}: {}", f.kind, f.n, f.error);
    }
    Ok(())
}
