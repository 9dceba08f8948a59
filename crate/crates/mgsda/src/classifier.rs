//! Plug-in classification from a fitted coefficient matrix.
//!
//! A new observation x is assigned to the group minimizing
//!
//! ```text
//! (x - x̄_g)ᵀ V (VᵀWV)⁺ Vᵀ (x - x̄_g) - 2 log(n_g / n),
//! ```
//!
//! the Gaussian discriminant score in the subspace spanned by V's columns
//! with empirical priors. The Gram matrix VᵀWV may be singular when V is
//! sparse, so its inverse is replaced by an eigenvalue pseudo-inverse with a
//! relative cutoff; for invertible Gram matrices the two coincide. Labels
//! are invariant to replacing V with V·R for any invertible R.

use crate::linalg::Matrix;
use crate::stats::SampleStatistics;
use crate::{Error, Result};

/// Relative eigenvalue cutoff for the Gram pseudo-inverse.
const PINV_CUTOFF: f64 = 1e-10;

/// Immutable classification model.
#[derive(Clone, Debug)]
pub struct ClassifierModel {
    v: Matrix,
    /// Group means, one row per group (G x p).
    means: Matrix,
    counts: Vec<usize>,
    n: usize,
    gram: Matrix,
    gram_pinv: Matrix,
    /// Set when V has no nonzero entries; scores then reduce to the priors.
    degenerate: bool,
}

/// A label in 1..=G together with the per-group scores that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub label: usize,
    pub scores: Vec<f64>,
}

/// Builds the model, caching VᵀWV and its pseudo-inverse.
pub fn build_model(stats: &SampleStatistics, v: &Matrix) -> Result<ClassifierModel> {
    if v.rows() != stats.p() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients have {} rows for {} features",
            v.rows(),
            stats.p()
        )));
    }
    if v.cols() == 0 {
        return Err(Error::DimensionMismatch("coefficient matrix has no columns".into()));
    }
    let gram = v.transpose().matmul(&stats.w().matmul(v));
    let gram_pinv = pseudo_inverse(&gram);
    Ok(ClassifierModel {
        v: v.clone(),
        means: stats.means().clone(),
        counts: stats.counts().to_vec(),
        n: stats.n(),
        gram,
        gram_pinv,
        degenerate: v.max_abs() == 0.0,
    })
}

impl ClassifierModel {
    /// Rebuilds a model from stored parts (deserialization path).
    pub fn from_parts(v: Matrix, means: Matrix, counts: Vec<usize>, w: &Matrix) -> Result<Self> {
        let gram = v.transpose().matmul(&w.matmul(&v));
        Self::from_cached_gram(v, means, counts, gram)
    }

    /// Rebuilds a model from stored parts with the Gram matrix VᵀWV already
    /// computed, as persisted in model files.
    pub fn from_cached_gram(
        v: Matrix,
        means: Matrix,
        counts: Vec<usize>,
        gram: Matrix,
    ) -> Result<Self> {
        if means.rows() != counts.len() || means.cols() != v.rows() {
            return Err(Error::DimensionMismatch(format!(
                "means are {}x{} for {} counts and {} coefficient rows",
                means.rows(),
                means.cols(),
                counts.len(),
                v.rows()
            )));
        }
        if gram.rows() != v.cols() || gram.cols() != v.cols() {
            return Err(Error::DimensionMismatch(format!(
                "gram is {}x{} for {} directions",
                gram.rows(),
                gram.cols(),
                v.cols()
            )));
        }
        let n = counts.iter().sum();
        let gram_pinv = pseudo_inverse(&gram);
        let degenerate = v.max_abs() == 0.0;
        Ok(Self { v, means, counts, n, gram, gram_pinv, degenerate })
    }

    pub fn coefficients(&self) -> &Matrix {
        &self.v
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> usize {
        self.counts.len()
    }

    pub fn p(&self) -> usize {
        self.v.rows()
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn gram_pinv(&self) -> &Matrix {
        &self.gram_pinv
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Scores every group and returns the argmin label; ties break toward
    /// the smallest group index.
    pub fn classify(&self, x: &[f64]) -> Result<Classification> {
        if x.len() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "observation has {} features, model wants {}",
                x.len(),
                self.p()
            )));
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { index });
        }
        let k = self.v.cols();
        let mut centered = vec![0.0; self.p()];
        let mut projected = vec![0.0; k];
        let mut weighted = vec![0.0; k];
        let mut scores = Vec::with_capacity(self.groups());
        for g in 0..self.groups() {
            let mean = self.means.row(g);
            for j in 0..self.p() {
                centered[j] = x[j] - mean[j];
            }
            for c in 0..k {
                let mut acc = 0.0;
                for j in 0..self.p() {
                    acc += self.v.get(j, c) * centered[j];
                }
                projected[c] = acc;
            }
            for c in 0..k {
                let mut acc = 0.0;
                for d in 0..k {
                    acc += self.gram_pinv.get(c, d) * projected[d];
                }
                weighted[c] = acc;
            }
            let quad: f64 = projected.iter().zip(&weighted).map(|(a, b)| a * b).sum();
            let prior = 2.0 * (self.counts[g] as f64 / self.n as f64).ln();
            scores.push(quad - prior);
        }
        let mut label = 1;
        let mut best = scores[0];
        for (g, &score) in scores.iter().enumerate().skip(1) {
            if score < best {
                best = score;
                label = g + 1;
            }
        }
        Ok(Classification { label, scores })
    }

    /// Row-wise classification; output order matches the input rows.
    pub fn classify_batch(&self, x: &Matrix) -> Result<Vec<Classification>> {
        if x.cols() != self.p() && x.rows() > 0 {
            return Err(Error::DimensionMismatch(format!(
                "batch has {} features, model wants {}",
                x.cols(),
                self.p()
            )));
        }
        (0..x.rows()).map(|i| self.classify(x.row(i))).collect()
    }
}

/// Eigenvalue pseudo-inverse of a small symmetric PSD matrix, dropping
/// eigenvalues below `PINV_CUTOFF` times the largest.
fn pseudo_inverse(m: &Matrix) -> Matrix {
    let n = m.rows();
    if n == 0 {
        return m.clone();
    }
    let (values, vectors) = symmetric_eigen(m);
    let top = values.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let cutoff = PINV_CUTOFF * top;
    let mut out = Matrix::zeros(n, n);
    for e in 0..n {
        if values[e].abs() <= cutoff || values[e] <= 0.0 {
            continue;
        }
        let inv = 1.0 / values[e];
        for a in 0..n {
            for b in 0..n {
                out.set(a, b, out.get(a, b) + inv * vectors.get(a, e) * vectors.get(b, e));
            }
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition for the (G-1) x (G-1) Gram matrix.
/// Returns (eigenvalues, column eigenvectors).
fn symmetric_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.rows();
    let mut a = m.symmetrized();
    let mut q = Matrix::identity(n);
    for _ in 0..64 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a.get(i, j).abs());
            }
        }
        if off <= 1e-14 * a.max_abs().max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = a.get(p, r);
                if apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (a.get(r, r) - a.get(p, p)) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, r);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, r, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(r, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(r, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let qkp = q.get(k, p);
                    let qkq = q.get(k, r);
                    q.set(k, p, c * qkp - s * qkq);
                    q.set(k, r, s * qkp + c * qkq);
                }
            }
        }
    }
    ((0..n).map(|i| a.get(i, i)).collect(), q)
}
