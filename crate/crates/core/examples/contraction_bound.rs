//! Geometric error bound of FoCa on contractive linear systems, with reuse
//! for contrast.
//!
//! `cargo run --release --example contraction_bound`

use foca::diagnostics::{verify_proposition1, DEFAULT_SLACK};
use foca::dynamics::LinearSystem;
use foca::predictors::PredictorKind;
use foca::FeatureVector;

fn main() -> foca::Result<()> {
    println!("  rho  tau_max   sup bound  max error  holds  reuse k-growth");
    for rho in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let sys = LinearSystem::with_step_factors(
            &[rho, 0.5 * rho],
            1.0,
            FeatureVector::from_slice(&[1.0, -2.0])?,
        )?;
        let foca = verify_proposition1(&sys, 1.0, 2, 20, PredictorKind::FoCa, DEFAULT_SLACK)?;
        let reuse = verify_proposition1(&sys, 1.0, 2, 10, PredictorKind::Reuse, DEFAULT_SLACK)?;
        let max_err = foca.errors.iter().cloned().fold(0.0, f64::max);
        println!(
            "{rho:>5}  {:.3e}  {:.3e}  {:.3e}  {:>5}  {}",
            foca.tau_max,
            foca.sup_bound,
            max_err,
            foca.verdict(),
            reuse.error_strictly_increasing
        );
    }
    Ok(())
}
