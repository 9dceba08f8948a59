//! Deterministic Monte-Carlo harness for the support-recovery experiments.
//!
//! A sweep fixes a population scenario (structure, p, s, ρ, three groups)
//! and a grid of rescaled sample sizes θ. Each (θ, replicate) cell draws a
//! dataset of n = ⌈θ·s·ln p⌉ observations (natural logarithm), fits the
//! penalized estimator with λ chosen by the configured rule, and records the
//! Hamming distance between the estimated and true supports.
//!
//! Every cell owns a private generator stream derived from
//! `(base_seed, theta_index, replicate)` through [`crate::rng::mix_seed`],
//! so results are bit-identical whether cells run serially or across any
//! number of threads, and a single record can be reproduced in isolation.

use crate::diagnostics::{lambda_calibrated_rule, lambda_recovery_rule, lambda_simulation_rule};
use crate::linalg::Matrix;
use crate::population::{build_sigma, scenario_means, PopulationSpec, SigmaStructure};
use crate::rng::{mix_seed, SplitMix64};
use crate::solver::{solve, Problem, SolverOptions};
use crate::stats::{compute_stats, LabeledDataset};
use crate::{Error, Result};

/// Default replicate count per grid point; the config may override it
/// (200 is the other figure this protocol is commonly run with).
pub const DEFAULT_REPLICATES: usize = 100;

/// Label redraw attempts before a draw is declared degenerate.
const MAX_LABEL_RETRIES: usize = 100;

/// How the per-cell penalty is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaRule {
    /// The calibrated rule 0.5 (1 + ‖Δ_AᵀΣ_AA⁻¹Δ_A‖₂) √(log(p-s)/n), the
    /// default: it tracks the exact-recovery window and produces the phase
    /// transition (see [`lambda_calibrated_rule`]).
    Calibrated,
    /// The printed simulation rule, with the quadratic-form factor inverted:
    /// 0.5 (1 + ‖Δ_AᵀΣ_AA⁻¹Δ_A‖₂)⁻¹ √(log(p-s)/n). Kept for fidelity; its
    /// penalties sit below the dual-noise floor.
    Simulation,
    /// The recovery-theory rule with multiplier K_λ.
    Recovery { k_lambda: f64 },
    /// A fixed value for every cell.
    Fixed(f64),
}

/// Full sweep configuration.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub structure: SigmaStructure,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    /// Group count; the scenario means are defined for exactly three groups.
    pub groups: usize,
    /// Group priors; uniform when absent.
    pub priors: Option<Vec<f64>>,
    /// Rescaled sample sizes, strictly increasing and positive.
    pub thetas: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
    pub lambda_rule: LambdaRule,
    /// Solver controls for every cell.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl ScenarioConfig {
    pub fn new(structure: SigmaStructure, p: usize, s: usize, rho: f64) -> Self {
        Self {
            structure,
            p,
            s,
            rho,
            groups: 3,
            priors: None,
            thetas: Vec::new(),
            replicates: DEFAULT_REPLICATES,
            base_seed: 0,
            lambda_rule: LambdaRule::Calibrated,
            tol: 1e-8,
            max_sweeps: 50_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups != 3 {
            return Err(Error::DimensionMismatch(format!(
                "the scenario means are three-group; got groups = {}",
                self.groups
            )));
        }
        if self.p < 2 {
            return Err(Error::DimensionMismatch(format!("p = {} is too small", self.p)));
        }
        if self.thetas.is_empty() {
            return Err(Error::DimensionMismatch("theta grid is empty".into()));
        }
        for pair in self.thetas.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::DimensionMismatch(format!(
                    "theta grid must be strictly increasing, got {} after {}",
                    pair[1], pair[0]
                )));
            }
        }
        if !(self.thetas[0] > 0.0) {
            return Err(Error::DimensionMismatch(format!(
                "theta values must be positive, got {}",
                self.thetas[0]
            )));
        }
        if self.replicates == 0 {
            return Err(Error::DimensionMismatch("replicates must be at least 1".into()));
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::DimensionMismatch("invalid solver controls".into()));
        }
        if !matches!(self.lambda_rule, LambdaRule::Fixed(_)) && self.p <= self.s {
            return Err(Error::NoComplement);
        }
        // Validates s (even, ≤ p) and rho en passant.
        scenario_means(self.p, self.s)?;
        build_sigma(self.structure, self.s, self.rho, self.p)?;
        if let Some(priors) = &self.priors {
            if priors.len() != self.groups {
                return Err(Error::InvalidPriors);
            }
        }
        Ok(())
    }

    /// The population this configuration describes.
    pub fn population(&self) -> Result<PopulationSpec> {
        self.validate()?;
        let means = scenario_means(self.p, self.s)?;
        let sigma = build_sigma(self.structure, self.s, self.rho, self.p)?;
        let priors =
            self.priors.clone().unwrap_or_else(|| vec![1.0 / self.groups as f64; self.groups]);
        PopulationSpec::derive(priors, means, sigma)
    }

    /// Sample size for one grid point: ⌈θ·s·ln p⌉.
    pub fn sample_size(&self, theta: f64) -> usize {
        (theta * self.s as f64 * (self.p as f64).ln()).ceil() as usize
    }
}

/// Draws n observations: labels independently from the priors, features as
/// μ_g + L·z with L the covariance factor and z standard normal.
///
/// Stream layout, in order: the label uniforms (all n per attempt, retried
/// as a whole until every group is represented), then p normals per
/// observation in observation order. Identical seeds give bit-identical
/// datasets.
pub fn sample_dataset(spec: &PopulationSpec, n: usize, seed: u64) -> Result<LabeledDataset> {
    let groups = spec.groups();
    if n < groups {
        return Err(Error::DegenerateDraw { retries: 0 });
    }
    let mut rng = SplitMix64::new(seed);

    let mut cumulative = Vec::with_capacity(groups);
    let mut acc = 0.0;
    for &prior in spec.priors() {
        acc += prior;
        cumulative.push(acc);
    }

    let mut labels = vec![0usize; n];
    let mut complete = false;
    let mut retries = 0;
    while retries < MAX_LABEL_RETRIES {
        let mut seen = vec![false; groups];
        for label in labels.iter_mut() {
            let u = rng.next_f64();
            let g = cumulative.iter().position(|&c| u < c).unwrap_or(groups - 1);
            *label = g + 1;
            seen[g] = true;
        }
        if seen.iter().all(|&s| s) {
            complete = true;
            break;
        }
        retries += 1;
    }
    if !complete {
        return Err(Error::DegenerateDraw { retries });
    }

    let p = spec.p();
    let factor = spec.sigma_factor();
    let mut data = Vec::with_capacity(n * p);
    let mut z = vec![0.0; p];
    for &label in &labels {
        for value in z.iter_mut() {
            *value = rng.standard_normal();
        }
        let correlated = factor.mul_lower(&z);
        let mean = spec.means().row(label - 1);
        for j in 0..p {
            data.push(mean[j] + correlated[j]);
        }
    }
    LabeledDataset::new(Matrix::from_raw(n, p, data), labels, groups)
}

/// Size of the symmetric difference between two index sets over 0..p.
pub fn hamming(a_hat: &[usize], a: &[usize], p: usize) -> Result<usize> {
    let mut in_hat = vec![false; p];
    let mut in_a = vec![false; p];
    for &i in a_hat {
        if i >= p {
            return Err(Error::IndexOutOfRange { index: i, bound: p });
        }
        in_hat[i] = true;
    }
    for &i in a {
        if i >= p {
            return Err(Error::IndexOutOfRange { index: i, bound: p });
        }
        in_a[i] = true;
    }
    Ok((0..p).filter(|&i| in_hat[i] != in_a[i]).count())
}

/// One (θ, replicate) outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub theta: f64,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub structure: SigmaStructure,
    pub replicate: usize,
    pub seed: u64,
    pub n: usize,
    pub lambda: f64,
    /// `None` when the replicate failed (degenerate draw or solver error);
    /// such cells are excluded from aggregates and written as -1 in CSV.
    pub hamming: Option<usize>,
    pub support_size: usize,
    pub converged: bool,
}

/// Per-θ aggregate over the successful replicates.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAggregate {
    pub theta: f64,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub structure: SigmaStructure,
    pub mean_hamming: f64,
    /// Standard error of the mean (0 when a single replicate was used).
    pub stderr: f64,
    pub replicates_used: usize,
}

/// All records (θ ascending, replicate ascending) plus per-θ aggregates.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub aggregates: Vec<SweepAggregate>,
}

/// Runs the full grid. `threads` caps the worker count; 0 picks the number
/// of available cores. Output is independent of the cap, byte for byte.
pub fn run_sweep(config: &ScenarioConfig, threads: usize) -> Result<SweepResult> {
    config.validate()?;
    let spec = config.population()?;
    let true_support = spec.support().to_vec();

    let mut sizes = Vec::with_capacity(config.thetas.len());
    let mut lambdas = Vec::with_capacity(config.thetas.len());
    for &theta in &config.thetas {
        let n = config.sample_size(theta);
        sizes.push(n);
        lambdas.push(cell_lambda(config, &spec, n)?);
    }

    let cells: Vec<(usize, usize)> = (0..config.thetas.len())
        .flat_map(|t| (0..config.replicates).map(move |r| (t, r)))
        .collect();

    let worker = |&(theta_idx, replicate): &(usize, usize)| -> SweepRecord {
        replicate_record(
            config,
            &spec,
            &true_support,
            config.thetas[theta_idx],
            theta_idx,
            sizes[theta_idx],
            lambdas[theta_idx],
            replicate,
        )
    };

    let worker_count = if threads == 0 {
        std::thread::available_parallelism().map(|c| c.get()).unwrap_or(1)
    } else {
        threads
    };

    let records: Vec<SweepRecord> = if worker_count <= 1 || cells.len() <= 1 {
        cells.iter().map(worker).collect()
    } else {
        let chunk = cells.len().div_ceil(worker_count);
        let mut slots: Vec<Option<SweepRecord>> = vec![None; cells.len()];
        std::thread::scope(|scope| {
            for (cell_chunk, slot_chunk) in cells.chunks(chunk).zip(slots.chunks_mut(chunk)) {
                scope.spawn(move || {
                    for (cell, slot) in cell_chunk.iter().zip(slot_chunk.iter_mut()) {
                        *slot = Some(worker(cell));
                    }
                });
            }
        });
        slots.into_iter().map(|slot| slot.expect("all cells computed")).collect()
    };

    let aggregates = aggregate(config, &records);
    Ok(SweepResult { records, aggregates })
}

fn cell_lambda(config: &ScenarioConfig, spec: &PopulationSpec, n: usize) -> Result<f64> {
    match config.lambda_rule {
        LambdaRule::Calibrated => lambda_calibrated_rule(spec, n.max(1)),
        LambdaRule::Simulation => lambda_simulation_rule(spec, n.max(1)),
        LambdaRule::Recovery { k_lambda } => lambda_recovery_rule(spec, n.max(3), k_lambda),
        LambdaRule::Fixed(value) => Ok(value),
    }
}

/// Recomputes a single sweep record from its grid coordinates, independent
/// of every other cell; `run_sweep` produces exactly this record at the
/// same position.
pub fn run_replicate(
    config: &ScenarioConfig,
    theta_index: usize,
    replicate: usize,
) -> Result<SweepRecord> {
    config.validate()?;
    if theta_index >= config.thetas.len() {
        return Err(Error::IndexOutOfRange { index: theta_index, bound: config.thetas.len() });
    }
    if replicate >= config.replicates {
        return Err(Error::IndexOutOfRange { index: replicate, bound: config.replicates });
    }
    let spec = config.population()?;
    let theta = config.thetas[theta_index];
    let n = config.sample_size(theta);
    let lambda = cell_lambda(config, &spec, n)?;
    Ok(replicate_record(
        config,
        &spec,
        spec.support(),
        theta,
        theta_index,
        n,
        lambda,
        replicate,
    ))
}

#[allow(clippy::too_many_arguments)]
fn replicate_record(
    config: &ScenarioConfig,
    spec: &PopulationSpec,
    true_support: &[usize],
    theta: f64,
    theta_idx: usize,
    n: usize,
    lambda: f64,
    replicate: usize,
) -> SweepRecord {
    let seed = mix_seed(config.base_seed, theta_idx as u64, replicate as u64);
    let opts = SolverOptions { tol: config.tol, max_sweeps: config.max_sweeps, initial: None };

    let outcome = (|| -> Result<(usize, usize, bool)> {
        let dataset = sample_dataset(spec, n, seed)?;
        let stats = compute_stats(&dataset)?;
        let prob = Problem::from_stats(&stats, lambda)?;
        let (coef, report) = solve(&prob, &opts)?;
        let distance = hamming(coef.support(), true_support, config.p)?;
        Ok((distance, coef.support_size(), report.converged))
    })();

    let (hamming, support_size, converged) = match outcome {
        Ok((h, size, conv)) => (Some(h), size, conv),
        Err(_) => (None, 0, false),
    };

    SweepRecord {
        theta,
        p: config.p,
        s: config.s,
        rho: config.rho,
        structure: config.structure,
        replicate,
        seed,
        n,
        lambda,
        hamming,
        support_size,
        converged,
    }
}

fn aggregate(config: &ScenarioConfig, records: &[SweepRecord]) -> Vec<SweepAggregate> {
    let mut out = Vec::with_capacity(config.thetas.len());
    for &theta in &config.thetas {
        let values: Vec<f64> = records
            .iter()
            .filter(|r| r.theta == theta)
            .filter_map(|r| r.hamming.map(|h| h as f64))
            .collect();
        let used = values.len();
        let mean = if used == 0 { f64::NAN } else { values.iter().sum::<f64>() / used as f64 };
        let stderr = if used > 1 {
            let var =
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (used - 1) as f64;
            (var / used as f64).sqrt()
        } else {
            0.0
        };
        out.push(SweepAggregate {
            theta,
            p: config.p,
            s: config.s,
            rho: config.rho,
            structure: config.structure,
            mean_hamming: mean,
            stderr,
            replicates_used: used,
        });
    }
    out
}

/// Serializes a float with 17 significant digits, enough to round-trip f64.
pub fn format_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Per-record CSV, exact column order:
/// theta,p,s,rho,structure,replicate,seed,n,lambda,hamming,support_size,converged
pub fn records_csv(result: &SweepResult) -> String {
    let mut out = String::from(
        "theta,p,s,rho,structure,replicate,seed,n,lambda,hamming,support_size,converged\n",
    );
    for r in &result.records {
        let hamming = match r.hamming {
            Some(h) => h as i64,
            None => -1,
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            format_g17(r.theta),
            r.p,
            r.s,
            format_g17(r.rho),
            r.structure.name(),
            r.replicate,
            r.seed,
            r.n,
            format_g17(r.lambda),
            hamming,
            r.support_size,
            r.converged,
        ));
    }
    out
}

/// Aggregate CSV, exact column order:
/// theta,p,s,rho,structure,mean_hamming,stderr,replicates_used
pub fn aggregates_csv(result: &SweepResult) -> String {
    let mut out = String::from("theta,p,s,rho,structure,mean_hamming,stderr,replicates_used\n");
    for a in &result.aggregates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            format_g17(a.theta),
            a.p,
            a.s,
            format_g17(a.rho),
            a.structure.name(),
            format_g17(a.mean_hamming),
            format_g17(a.stderr),
            a.replicates_used,
        ));
    }
    out
}

/// Monte-Carlo check of the contrast matrix moments: across repeated
/// datasets, D should be centered near Δ with per-column covariance Σ/n and
/// independent columns.
#[derive(Clone, Debug)]
pub struct MomentCheck {
    pub draws: usize,
    pub n: usize,
    /// Largest |mean(D) - Δ| entry.
    pub mean_max_abs_dev: f64,
    /// That deviation in units of √(Σ_jj/(n·draws)), maximized over entries.
    pub mean_max_z: f64,
    /// Worst per-column covariance deviation from Σ/n in standard errors.
    pub column_cov_max_z: f64,
    /// Per-column covariance deviation on the support block, relative to the
    /// largest entry of Σ_AA/n.
    pub column_cov_max_scaled_dev: f64,
    /// Worst cross-column covariance entry in standard errors of zero.
    pub cross_cov_max_z: f64,
}

/// Draws `draws` independent datasets of size n and compares the empirical
/// moments of D with the population values. Meant to run with at least a
/// thousand draws; the z-scores assume the draw count carries the averaging.
pub fn contrast_moment_check(
    spec: &PopulationSpec,
    n: usize,
    draws: usize,
    seed: u64,
) -> Result<MomentCheck> {
    if draws < 2 {
        return Err(Error::DimensionMismatch("need at least two draws".into()));
    }
    let p = spec.p();
    let k = spec.groups() - 1;

    let mut sum = Matrix::zeros(p, k);
    // Outer-product accumulators: one p x p per column, one per column pair.
    let mut col_outer = vec![Matrix::zeros(p, p); k];
    let mut cross_outer = vec![Matrix::zeros(p, p); k * (k - 1) / 2];

    for draw in 0..draws {
        let dataset = sample_dataset(spec, n, mix_seed(seed, 0x4D43, draw as u64))?;
        let stats = compute_stats(&dataset)?;
        let d = stats.d();
        for i in 0..p {
            for j in 0..k {
                sum.set(i, j, sum.get(i, j) + d.get(i, j));
            }
        }
        for r in 0..k {
            let outer = &mut col_outer[r];
            for a in 0..p {
                let da = d.get(a, r);
                for b in 0..p {
                    outer.set(a, b, outer.get(a, b) + da * d.get(b, r));
                }
            }
        }
        let mut pair = 0;
        for r in 0..k {
            for t in (r + 1)..k {
                let outer = &mut cross_outer[pair];
                for a in 0..p {
                    let da = d.get(a, r);
                    for b in 0..p {
                        outer.set(a, b, outer.get(a, b) + da * d.get(b, t));
                    }
                }
                pair += 1;
            }
        }
    }

    let mean = sum.scale(1.0 / draws as f64);
    let nf = n as f64;
    let draws_f = draws as f64;

    let mut mean_max_abs_dev = 0.0f64;
    let mut mean_max_z = 0.0f64;
    for i in 0..p {
        let se = (spec.sigma().get(i, i) / (nf * draws_f)).sqrt();
        for j in 0..k {
            let dev = (mean.get(i, j) - spec.delta().get(i, j)).abs();
            mean_max_abs_dev = mean_max_abs_dev.max(dev);
            mean_max_z = mean_max_z.max(dev / se);
        }
    }

    // Target covariance of each column is Σ/n.
    let mut column_cov_max_z = 0.0f64;
    let mut column_cov_max_scaled_dev = 0.0f64;
    let support = spec.support();
    let mut block_scale = 0.0f64;
    for &a in support {
        for &b in support {
            block_scale = block_scale.max((spec.sigma().get(a, b) / nf).abs());
        }
    }
    for (r, outer) in col_outer.iter().enumerate() {
        for a in 0..p {
            for b in 0..p {
                let emp = (outer.get(a, b) - draws_f * mean.get(a, r) * mean.get(b, r))
                    / (draws_f - 1.0);
                let target = spec.sigma().get(a, b) / nf;
                let c_aa = spec.sigma().get(a, a) / nf;
                let c_bb = spec.sigma().get(b, b) / nf;
                let se = ((c_aa * c_bb + target * target) / draws_f).sqrt();
                let dev = (emp - target).abs();
                column_cov_max_z = column_cov_max_z.max(dev / se);
                if support.contains(&a) && support.contains(&b) && block_scale > 0.0 {
                    column_cov_max_scaled_dev = column_cov_max_scaled_dev.max(dev / block_scale);
                }
            }
        }
    }

    let mut cross_cov_max_z = 0.0f64;
    let mut pair = 0;
    for r in 0..k {
        for t in (r + 1)..k {
            let outer = &cross_outer[pair];
            for a in 0..p {
                for b in 0..p {
                    let emp = (outer.get(a, b) - draws_f * mean.get(a, r) * mean.get(b, t))
                        / (draws_f - 1.0);
                    let c_aa = spec.sigma().get(a, a) / nf;
                    let c_bb = spec.sigma().get(b, b) / nf;
                    let se = (c_aa * c_bb / draws_f).sqrt();
                    cross_cov_max_z = cross_cov_max_z.max(emp.abs() / se);
                }
            }
            pair += 1;
        }
    }

    Ok(MomentCheck {
        draws,
        n,
        mean_max_abs_dev,
        mean_max_z,
        column_cov_max_z,
        column_cov_max_scaled_dev,
        cross_cov_max_z,
    })
}
