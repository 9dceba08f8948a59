//! Monte-Carlo check of the contrast matrix moments: across repeated
//! datasets D concentrates at Δ with per-column covariance close to Σ/n and
//! near-independent columns. The per-column covariance carries a visible
//! finite-n distortion from the randomness of the group counts — the check
//! reports it rather than hiding it.
//!
//! Run with: cargo run --release --example contrast_moments

use mgsda::experiments::contrast_moment_check;
use mgsda::population::{PopulationSpec, SigmaStructure};

fn main() {
    let spec = PopulationSpec::scenario(SigmaStructure::Toeplitz, 10, 4, 0.0).unwrap();
    println!("scenario: p = 10, s = 4, identity covariance, three groups\n");
    for (n, draws) in [(100, 2_000), (200, 5_000), (1000, 5_000)] {
        let check = contrast_moment_check(&spec, n, draws, 99).unwrap();
        println!("n = {n:4}, draws = {draws}:");
        println!(
            "  mean:        max |dev| {:.2e}  ({:.2} standard errors)",
            check.mean_max_abs_dev, check.mean_max_z
        );
        println!(
            "  column cov:  {:.2} standard errors from Sigma/n \
             ({:.1}% of the support-block scale)",
            check.column_cov_max_z,
            100.0 * check.column_cov_max_scaled_dev
        );
        println!("  cross cov:   {:.2} standard errors from zero\n", check.cross_cov_max_z);
    }
    println!(
        "The column-covariance deviation shrinks like 1/n relative to the \
         target while the standard error shrinks like 1/sqrt(draws), so the \
         z-score grows with the draw count at fixed n: it is a real finite-n \
         property of the contrast weights, not estimation noise."
    );
}
