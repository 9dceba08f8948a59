//! End-to-end tests of the `mgsda` binary: exit codes, file schemas, and
//! the round trips the commands promise.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Output;

use mgsda::linalg::{spd_factor, Matrix};
use mgsda::rng::SplitMix64;
use mgsda::stats::{compute_stats, LabeledDataset};

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mgsda_cli_it_{name}"));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn mgsda(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_mgsda")).args(args).output().unwrap()
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap_or(-1)
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

/// Deterministic well-separated three-group table with p = 5 features.
fn toy_rows(n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = SplitMix64::new(0xC11);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let g = i % 3 + 1;
        labels.push(g);
        let mut row = Vec::with_capacity(5);
        for j in 0..5 {
            let mean = if j < 3 { 4.0 * g as f64 * (j + 1) as f64 / 3.0 } else { 0.0 };
            row.push(mean + rng.standard_normal());
        }
        rows.push(row);
    }
    (rows, labels)
}

fn write_toy_csv(path: &Path, rows: &[Vec<f64>], labels: &[usize]) {
    let mut text = String::from("x1,x2,x3,x4,x5,label\n");
    for (row, label) in rows.iter().zip(labels) {
        for value in row {
            text.push_str(&format!("{value:.17e},"));
        }
        text.push_str(&format!("{label}\n"));
    }
    std::fs::write(path, text).unwrap();
}

fn model_values(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|line| line.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[test]
fn fit_reproduces_the_closed_form_at_zero_lambda() {
    let dir = workdir("fit_closed_form");
    let data = dir.join("train.csv");
    let model_path = dir.join("model.txt");
    let (rows, labels) = toy_rows(60);
    write_toy_csv(&data, &rows, &labels);

    let output = mgsda(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model_path.to_str().unwrap(),
        "--lambda",
        "0",
        "--tol",
        "1e-12",
    ]);
    assert_eq!(code(&output), 0, "{}", stderr(&output));

    // Independent closed form from the same data.
    let features = Matrix::from_rows(&rows).unwrap();
    let dataset = LabeledDataset::new(features, labels, 3).unwrap();
    let stats = compute_stats(&dataset).unwrap();
    let m = stats.w().add(&stats.d().matmul(&stats.d().transpose()));
    let expected = spd_factor(&m).unwrap().solve(stats.d()).unwrap();

    let model = model_values(&std::fs::read_to_string(&model_path).unwrap());
    let support: Vec<usize> =
        model["support"].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(support, vec![0, 1, 2, 3, 4], "all variables stay active at lambda = 0");
    for i in 0..5 {
        let row: Vec<f64> =
            model[&format!("v_{i}")].split(',').map(|v| v.parse().unwrap()).collect();
        for j in 0..2 {
            let want = expected.get(i, j);
            assert!(
                (row[j] - want).abs() <= 1e-7 * (1.0 + want.abs()),
                "model row {i} col {j}: {} vs {want}",
                row[j]
            );
        }
    }
}

#[test]
fn fit_with_huge_lambda_warns_about_the_empty_support() {
    let dir = workdir("fit_empty");
    let data = dir.join("train.csv");
    let model_path = dir.join("model.txt");
    let (rows, labels) = toy_rows(45);
    write_toy_csv(&data, &rows, &labels);

    let output = mgsda(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model_path.to_str().unwrap(),
        "--lambda",
        "1e6",
    ]);
    assert_eq!(code(&output), 0, "{}", stderr(&output));
    assert!(stderr(&output).contains("empty support"), "stderr: {}", stderr(&output));
    let model = model_values(&std::fs::read_to_string(&model_path).unwrap());
    assert_eq!(model["support"], "");

    // An empty-support model still predicts: scores reduce to the priors.
    let features = dir.join("features.csv");
    std::fs::write(&features, "x1,x2,x3,x4,x5
0.0,0.0,0.0,0.0,0.0
").unwrap();
    let predictions = dir.join("pred.csv");
    let output = mgsda(&[
        "predict",
        "--model",
        model_path.to_str().unwrap(),
        "--data",
        features.to_str().unwrap(),
        "--out",
        predictions.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", stderr(&output));
    let text = std::fs::read_to_string(&predictions).unwrap();
    let label: usize = text.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((1..=3).contains(&label));
}

#[test]
fn fit_rejects_a_missing_label_column() {
    let dir = workdir("fit_nolabel");
    let data = dir.join("train.csv");
    std::fs::write(&data, "a,b\n1.0,2.0\n").unwrap();
    let out_path = dir.join("model.txt");
    let output = mgsda(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--lambda",
        "0",
    ]);
    assert_eq!(code(&output), 2);
    assert!(stderr(&output).contains("label"), "stderr: {}", stderr(&output));
}

#[test]
fn predict_round_trips_the_training_data() {
    let dir = workdir("predict_roundtrip");
    let data = dir.join("train.csv");
    let model_path = dir.join("model.txt");
    let (rows, labels) = toy_rows(60);
    write_toy_csv(&data, &rows, &labels);
    let output = mgsda(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model_path.to_str().unwrap(),
        "--lambda",
        "0",
    ]);
    assert_eq!(code(&output), 0, "{}", stderr(&output));

    // Features-only file: training data minus the label column, plus one
    // extra row sitting exactly on the group-1 mean.
    let features_path = dir.join("features.csv");
    let dataset = {
        let features = Matrix::from_rows(&rows).unwrap();
        LabeledDataset::new(features, labels.clone(), 3).unwrap()
    };
    let stats = compute_stats(&dataset).unwrap();
    let mut text = String::from("x1,x2,x3,x4,x5\n");
    for row in &rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let mean1: Vec<String> = stats.means().row(0).iter().map(|v| format!("{v:.17e}")).collect();
    text.push_str(&mean1.join(","));
    text.push('\n');
    std::fs::write(&features_path, text).unwrap();

    let predictions_path = dir.join("predictions.csv");
    let output = mgsda(&[
        "predict",
        "--model",
        model_path.to_str().unwrap(),
        "--data",
        features_path.to_str().unwrap(),
        "--out",
        predictions_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", stderr(&output));

    let predictions = std::fs::read_to_string(&predictions_path).unwrap();
    let mut lines = predictions.lines();
    assert_eq!(lines.next().unwrap(), "label,score_1,score_2,score_3");
    let rows_out: Vec<Vec<String>> =
        lines.map(|l| l.split(',').map(|c| c.to_string()).collect()).collect();
    assert_eq!(rows_out.len(), 61);
    let mut correct = 0;
    for (i, cells) in rows_out.iter().enumerate() {
        let label: usize = cells[0].parse().unwrap();
        assert!((1..=3).contains(&label));
        for score in &cells[1..] {
            let value: f64 = score.parse().unwrap();
            assert!(value.is_finite());
        }
        if i < 60 && label == labels[i] {
            correct += 1;
        }
    }
    // Well-separated training data: far better than the 1/3 chance rate.
    assert!(correct >= 55, "only {correct}/60 training rows classified home");
    // The appended group-1 mean row lands in group 1.
    assert_eq!(rows_out[60][0], "1");
}

#[test]
fn predict_rejects_feature_count_mismatch() {
    let dir = workdir("predict_mismatch");
    let data = dir.join("train.csv");
    let model_path = dir.join("model.txt");
    let (rows, labels) = toy_rows(45);
    write_toy_csv(&data, &rows, &labels);
    let output = mgsda(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model_path.to_str().unwrap(),
        "--lambda",
        "0",
    ]);
    assert_eq!(code(&output), 0);

    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "a,b,c\n1.0,2.0,3.0\n").unwrap();
    let out_path = dir.join("pred.csv");
    let output = mgsda(&[
        "predict",
        "--model",
        model_path.to_str().unwrap(),
        "--data",
        bad.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
    assert!(stderr(&output).contains("feature"), "stderr: {}", stderr(&output));
}

#[test]
fn simulate_writes_the_expected_record_count_deterministically() {
    let dir = workdir("simulate");
    let config = dir.join("scenario.cfg");
    std::fs::write(
        &config,
        "structure = toeplitz\np = 100\ns = 10\nrho = 0\n\
         theta = 1, 2, 4, 8\nreplicates = 20\nseed = 5\n",
    )
    .unwrap();

    let run = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let records = dir.join(format!("records_{tag}.csv"));
        let aggregate = dir.join(format!("agg_{tag}.csv"));
        let output = mgsda(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            records.to_str().unwrap(),
            "--aggregate",
            aggregate.to_str().unwrap(),
        ]);
        assert_eq!(code(&output), 0, "{}", stderr(&output));
        (std::fs::read(&records).unwrap(), std::fs::read(&aggregate).unwrap())
    };

    let (records_a, aggregate_a) = run("a");
    let text = String::from_utf8(records_a.clone()).unwrap();
    assert_eq!(text.lines().count(), 81, "header plus 4 x 20 records");
    assert_eq!(
        text.lines().next().unwrap(),
        "theta,p,s,rho,structure,replicate,seed,n,lambda,hamming,support_size,converged"
    );
    let aggregate_text = String::from_utf8(aggregate_a.clone()).unwrap();
    assert_eq!(aggregate_text.lines().count(), 5);

    let (records_b, aggregate_b) = run("b");
    assert_eq!(records_a, records_b, "records differ between identical runs");
    assert_eq!(aggregate_a, aggregate_b, "aggregates differ between identical runs");
}

#[test]
fn simulate_rejects_a_zero_theta() {
    let dir = workdir("simulate_zero_theta");
    let config = dir.join("scenario.cfg");
    std::fs::write(
        &config,
        "structure = toeplitz\np = 20\ns = 4\nrho = 0\ntheta = 0, 1\nreplicates = 2\n",
    )
    .unwrap();
    let output = mgsda(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("r.csv").to_str().unwrap(),
        "--aggregate",
        dir.join("a.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
}

#[test]
fn diagnose_reports_the_documented_keys_for_a_block_scenario() {
    let dir = workdir("diagnose");
    let config = dir.join("scenario.cfg");
    std::fs::write(
        &config,
        "structure = toeplitz\np = 100\ns = 10\nrho = 0.5\nn = 400\n",
    )
    .unwrap();
    let report_path = dir.join("report.txt");
    let output = mgsda(&[
        "diagnose",
        "--config",
        config.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", stderr(&output));
    let report = std::fs::read_to_string(&report_path).unwrap();

    // The covariance is block diagonal, so the worst-case irrepresentability
    // is exactly zero.
    assert!(
        report.contains("irrepresentability_worst=0.0000000000000000e0"),
        "report:\n{report}"
    );
    let keys: Vec<&str> = report.lines().map(|l| l.split('=').next().unwrap()).collect();
    assert_eq!(
        keys,
        vec![
            "p",
            "s",
            "groups",
            "n",
            "irrepresentability_exact",
            "irrepresentability_worst",
            "alpha",
            "psi_min",
            "lambda_max",
            "lambda_max_sqrt_s",
            "psi_min_requirement",
            "sample_complexity_core",
            "lambda_recovery",
            "lambda_sim",
            "lambda_calibrated",
            "lambda_sim_form",
        ]
    );
}

#[test]
fn diagnose_with_no_complement_is_a_computational_failure() {
    let dir = workdir("diagnose_nocomp");
    let config = dir.join("scenario.cfg");
    std::fs::write(&config, "structure = toeplitz\np = 10\ns = 10\nrho = 0\nn = 100\n").unwrap();
    let output = mgsda(&[
        "diagnose",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.join("report.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 3, "{}", stderr(&output));
    assert!(stderr(&output).contains("complement"), "stderr: {}", stderr(&output));
}

#[test]
fn plot_draws_one_polyline_per_problem_size() {
    let dir = workdir("plot");
    let aggregate = dir.join("agg.csv");
    let mut text =
        String::from("theta,p,s,rho,structure,mean_hamming,stderr,replicates_used\n");
    for (p, offset) in [(100, 0.0), (200, 1.0)] {
        for (theta, mean) in [(0.5, 9.0), (1.0, 6.0), (2.0, 2.0), (4.0, 0.0)] {
            text.push_str(&format!(
                "{theta},{p},10,0.0,toeplitz,{},0.5,50\n",
                mean + offset
            ));
        }
    }
    std::fs::write(&aggregate, text).unwrap();

    let svg_path = dir.join("figure.svg");
    let output = mgsda(&[
        "plot",
        "--data",
        aggregate.to_str().unwrap(),
        "--out",
        svg_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", stderr(&output));
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    for fragment in svg.split("<polyline").skip(1) {
        let points = fragment.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 4, "expected 4 vertices per polyline");
    }
    assert!(svg.contains("p = 100") && svg.contains("p = 200"));
}

#[test]
fn plot_rejects_empty_or_malformed_aggregates() {
    let dir = workdir("plot_bad");
    let empty = dir.join("empty.csv");
    std::fs::write(&empty, "theta,p,s,rho,structure,mean_hamming,stderr,replicates_used\n")
        .unwrap();
    let output = mgsda(&[
        "plot",
        "--data",
        empty.to_str().unwrap(),
        "--out",
        dir.join("fig.svg").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);

    let malformed = dir.join("malformed.csv");
    std::fs::write(&malformed, "not,a,real,header\n1,2,3,4\n").unwrap();
    let output = mgsda(&[
        "plot",
        "--data",
        malformed.to_str().unwrap(),
        "--out",
        dir.join("fig.svg").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
}

#[test]
fn unknown_command_and_missing_flags_exit_2() {
    let output = mgsda(&["frobnicate"]);
    assert_eq!(code(&output), 2);
    let output = mgsda(&["fit", "--data"]);
    assert_eq!(code(&output), 2);
    let output = mgsda(&[]);
    assert_eq!(code(&output), 2);
}
