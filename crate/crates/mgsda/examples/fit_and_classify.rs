//! End-to-end workflow: sample a Gaussian scenario, fit the penalized
//! estimator, build the plug-in classifier, and score held-out data.
//!
//! Run with: cargo run --example fit_and_classify

use mgsda::classifier::build_model;
use mgsda::diagnostics::lambda_calibrated_rule;
use mgsda::experiments::sample_dataset;
use mgsda::population::{PopulationSpec, SigmaStructure};
use mgsda::solver::{solve, Problem, SolverOptions};
use mgsda::stats::compute_stats;

fn main() {
    let spec = PopulationSpec::scenario(SigmaStructure::Toeplitz, 60, 10, 0.25).unwrap();
    let n = 450;
    let train = sample_dataset(&spec, n, 41).unwrap();
    let stats = compute_stats(&train).unwrap();

    let lambda = lambda_calibrated_rule(&spec, n).unwrap();
    let prob = Problem::from_stats(&stats, lambda).unwrap();
    let (coef, report) = solve(&prob, &SolverOptions::default()).unwrap();
    println!(
        "fitted with lambda {lambda:.4}: support {:?} (true support 0..10), kkt {:.1e}",
        coef.support(),
        report.kkt_residual
    );

    let model = build_model(&stats, coef.matrix()).unwrap();
    let held_out = sample_dataset(&spec, 1500, 42).unwrap();
    let predictions = model.classify_batch(held_out.features()).unwrap();

    let mut confusion = [[0usize; 3]; 3];
    for (truth, prediction) in held_out.labels().iter().zip(&predictions) {
        confusion[truth - 1][prediction.label - 1] += 1;
    }
    let errors: usize = (0..3)
        .flat_map(|a| (0..3).filter(move |&b| a != b).map(move |b| confusion[a][b]))
        .sum();
    println!("held-out error rate {:.3} over {} draws", errors as f64 / 1500.0, 1500);
    println!("confusion (rows = truth):");
    for row in confusion {
        println!("  {row:?}");
    }
}
