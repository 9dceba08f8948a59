//! Desk-scale support-recovery phase transition: sweeps the rescaled sample
//! size for two problem dimensions, writes the per-replicate and aggregate
//! CSVs, and renders the aggregate curves to an SVG.
//!
//! Run with: cargo run --release --example phase_transition

use mgsda::experiments::{aggregates_csv, records_csv, run_sweep, ScenarioConfig};
use mgsda::population::SigmaStructure;

fn main() {
    let out_dir = std::env::temp_dir().join("mgsda_phase_transition");
    std::fs::create_dir_all(&out_dir).unwrap();

    let mut aggregate_csv_all = String::new();
    for (index, p) in [100usize, 200].iter().enumerate() {
        let mut config = ScenarioConfig::new(SigmaStructure::Toeplitz, *p, 10, 0.25);
        config.thetas = vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
        config.replicates = 30;
        config.base_seed = 2024;
        let result = run_sweep(&config, 0).unwrap();

        println!("p = {p}:");
        for aggregate in &result.aggregates {
            println!(
                "  theta {:>5.1}  n {:>5}  mean hamming {:>6.2} ± {:>5.2}  ({} replicates)",
                aggregate.theta,
                config.sample_size(aggregate.theta),
                aggregate.mean_hamming,
                aggregate.stderr,
                aggregate.replicates_used
            );
        }

        let records_path = out_dir.join(format!("records_p{p}.csv"));
        std::fs::write(&records_path, records_csv(&result)).unwrap();
        let aggregate_text = aggregates_csv(&result);
        if index == 0 {
            aggregate_csv_all.push_str(&aggregate_text);
        } else {
            // Concatenate without repeating the header so both curves land
            // in one plot.
            aggregate_csv_all.push_str(aggregate_text.split_once('\n').unwrap().1);
        }
    }

    let aggregate_path = out_dir.join("aggregate.csv");
    std::fs::write(&aggregate_path, &aggregate_csv_all).unwrap();
    println!("\nwrote CSVs under {}", out_dir.display());

    let svg_path = out_dir.join("phase_transition.svg");
    let status = mgsda::cli::run(&[
        "plot".into(),
        "--data".into(),
        aggregate_path.to_str().unwrap().into(),
        "--out".into(),
        svg_path.to_str().unwrap().into(),
    ]);
    assert_eq!(status, 0);
}
