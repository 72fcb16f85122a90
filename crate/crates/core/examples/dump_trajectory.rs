//! Cached against uncached hidden features for one denoiser trajectory, as
//! written by `foca dump`; prints the per-step gap.
//!
//! `cargo run --release --example dump_trajectory -- [kind] [interval]`

use foca::harness::{run_dump, ExperimentConfig, Overrides};

fn main() -> foca::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind = args.next().unwrap_or_else(|| "foca".into());
    let interval = args.next().unwrap_or_else(|| "5".into());
    let cfg = ExperimentConfig::load(
        None,
        &Overrides {
            assignments: vec![
                format!("dump.kind={kind}"),
                format!("dump.interval={interval}"),
            ],
            ..Default::default()
        },
    )?;
    let d = run_dump(&cfg)?;
    println!(
        "{} steps, feature dim {}",
        d.cached.len(),
        d.uncached[0].dim()
    );
    for (s, (c, u)) in d.cached.iter().zip(&d.uncached).enumerate() {
        println!(
            "{s:>4} |cached| {:>8.4} |uncached| {:>8.4} gap {:.3e}",
            c.norm(),
            u.norm(),
            c.distance(u)?
        );
    }
    Ok(())
}
