//! Group summaries computed from labeled data: per-group counts and means,
//! the pooled within-group scatter W, and the mean-contrast matrix D.
//!
//! With `n_g` observations in group `g` and `S_g` the usual per-group sample
//! covariance (divisor `n_g - 1`),
//!
//! ```text
//! W = (n - G)⁻¹ Σ_g (n_g - 1) S_g
//! D_r = √n_{r+1} Σ_{g≤r} n_g (x̄_g - x̄_{r+1}) / (√n √(Σ_{g≤r} n_g · Σ_{g≤r+1} n_g))
//! ```
//!
//! for r = 1..G-1. Contrast columns follow the label order 1..G exactly;
//! relabeling groups changes D but not the span of W⁻¹D.

use crate::linalg::Matrix;
use crate::{Error, Result};

/// n observations of p features with group labels in 1..=G.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    groups: usize,
}

impl LabeledDataset {
    /// Validates shapes, label range, and that every group is represented.
    pub fn new(features: Matrix, labels: Vec<usize>, groups: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} observations",
                labels.len(),
                features.rows()
            )));
        }
        if groups < 2 {
            return Err(Error::DegenerateSampleSize { n: features.rows(), groups });
        }
        let mut counts = vec![0usize; groups];
        for &label in &labels {
            if label < 1 || label > groups {
                return Err(Error::LabelOutOfRange { label, groups });
            }
            counts[label - 1] += 1;
        }
        if let Some(g) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyGroup { group: g + 1 });
        }
        Ok(Self { features, labels, groups })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn p(&self) -> usize {
        self.features.cols()
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Group counts and means plus the derived W and D.
#[derive(Clone, Debug)]
pub struct SampleStatistics {
    counts: Vec<usize>,
    /// Group means, one row per group (G x p).
    means: Matrix,
    w: Matrix,
    d: Matrix,
    n: usize,
    /// Groups with a single observation contribute nothing to W.
    singleton_groups: Vec<usize>,
}

/// Computes counts, means, W, and D. Requires n > G.
pub fn compute_stats(data: &LabeledDataset) -> Result<SampleStatistics> {
    let (n, p, groups) = (data.n(), data.p(), data.groups());
    if n <= groups {
        return Err(Error::DegenerateSampleSize { n, groups });
    }

    let mut counts = vec![0usize; groups];
    for &label in data.labels() {
        counts[label - 1] += 1;
    }

    let mut means = Matrix::zeros(groups, p);
    for (i, &label) in data.labels().iter().enumerate() {
        let row = data.features().row(i);
        let mean = means.row_mut(label - 1);
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for g in 0..groups {
        let c = counts[g] as f64;
        for m in means.row_mut(g) {
            *m /= c;
        }
    }

    // Pooled scatter: accumulate centered outer products group by group in a
    // fixed order so the result is bit-stable.
    let mut w = Matrix::zeros(p, p);
    for g in 0..groups {
        for (i, &label) in data.labels().iter().enumerate() {
            if label - 1 != g {
                continue;
            }
            let x = data.features().row(i);
            let mean = means.row(g);
            for a in 0..p {
                let da = x[a] - mean[a];
                if da == 0.0 {
                    continue;
                }
                let w_row = w.row_mut(a);
                for b in a..p {
                    w_row[b] += da * (x[b] - mean[b]);
                }
            }
        }
    }
    let scale = 1.0 / (n - groups) as f64;
    for a in 0..p {
        for b in a..p {
            let v = w.get(a, b) * scale;
            w.set(a, b, v);
            w.set(b, a, v);
        }
    }

    let d = contrast_columns(&counts, &means, n);
    let singleton_groups = (0..groups).filter(|&g| counts[g] == 1).map(|g| g + 1).collect();

    Ok(SampleStatistics { counts, means, w, d, n, singleton_groups })
}

fn contrast_columns(counts: &[usize], means: &Matrix, n: usize) -> Matrix {
    let groups = counts.len();
    let p = means.cols();
    let mut d = Matrix::zeros(p, groups - 1);
    let mut head_count = 0usize; // Σ_{g≤r} n_g
    for r in 0..groups - 1 {
        head_count += counts[r];
        let tail = counts[r + 1] as f64;
        let denom = (n as f64).sqrt() * ((head_count as f64) * (head_count as f64 + tail)).sqrt();
        let scale = tail.sqrt() / denom;
        for j in 0..p {
            let mut acc = 0.0;
            for g in 0..=r {
                acc += counts[g] as f64 * (means.get(g, j) - means.get(r + 1, j));
            }
            d.set(j, r, scale * acc);
        }
    }
    d
}

impl SampleStatistics {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.w.rows()
    }

    pub fn groups(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Group means, one row per group.
    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn singleton_groups(&self) -> &[usize] {
        &self.singleton_groups
    }

    /// Principal submatrix W_AA and row subset D_A, in the order of `a`.
    /// Indices are 0-based.
    pub fn restrict(&self, a: &[usize]) -> Result<(Matrix, Matrix)> {
        restrict_pair(&self.w, &self.d, a)
    }
}

/// Gathers (Q_AA, C_A) from a symmetric matrix and a matching tall matrix.
pub fn restrict_pair(q: &Matrix, c: &Matrix, a: &[usize]) -> Result<(Matrix, Matrix)> {
    if a.is_empty() {
        return Err(Error::EmptySupport);
    }
    let p = q.rows();
    for &i in a {
        if i >= p {
            return Err(Error::IndexOutOfRange { index: i, bound: p });
        }
    }
    let s = a.len();
    let mut q_aa = Matrix::zeros(s, s);
    for (r, &i) in a.iter().enumerate() {
        for (cix, &j) in a.iter().enumerate() {
            q_aa.set(r, cix, q.get(i, j));
        }
    }
    let k = c.cols();
    let mut c_a = Matrix::zeros(s, k);
    for (r, &i) in a.iter().enumerate() {
        for j in 0..k {
            c_a.set(r, j, c.get(i, j));
        }
    }
    Ok((q_aa, c_a))
}
