//! Trains the toy denoiser with the default recipe and prints the loss trace.
//!
//! `cargo run --release --example train_denoiser -- [out.txt]`

use foca::dynamics::{train_denoiser, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = TrainConfig::default();
    let (net, report) = train_denoiser(&cfg)?;
    for row in &report.log {
        println!(
            "step {:>6}  lr {:.4}  train {:.5}  held-out {:.5}",
            row.step, row.learning_rate, row.train_mse, row.held_out_mse
        );
    }
    println!(
        "held-out mse {:.5} (optimal {:.5}, threshold {:.5}) converged: {}",
        report.held_out_mse, report.bayes_floor, report.threshold, report.converged
    );
    if let Some(path) = std::env::args().nth(1) {
        net.save(std::path::Path::new(&path))?;
        println!("weights written to {path}");
    }
    Ok(())
}
