//! Dense row-major matrices and the few factorizations the estimator needs.
//!
//! Everything here is deliberately small: the problems in scope have at most
//! a few thousand variables, only the top singular value is ever needed, and
//! inverses are applied through a Cholesky factor rather than formed — except
//! where a diagnostic formula genuinely requires a stored inverse.

use crate::{Error, Result};

/// Relative asymmetry tolerated before symmetric routines refuse the input.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Dense matrix with entries stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting shape mismatches and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BadShape { rows, cols, len: data.len() });
        }
        for (k, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row: k / cols.max(1), col: k % cols.max(1) });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Internal constructor for entries produced by our own arithmetic.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Matrix product. Panics if the inner dimensions disagree.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul: inner dimensions disagree");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let lhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(lhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Matrix::from_raw(self.rows, self.cols, data)
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Matrix::from_raw(self.rows, self.cols, data)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|a| a * c).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest |m_ij - m_ji| over a square matrix.
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn symmetrized(&self) -> Matrix {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    /// Maximum row l1-norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }

    /// Maximum row l2-norm.
    pub fn norm_inf_2(&self) -> f64 {
        (0..self.rows).map(|i| row_norm(self.row(i))).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest singular value, via power iteration on MᵀM.
    ///
    /// Runs from the normalized all-ones vector and from a fixed pseudorandom
    /// vector, keeping the larger estimate; structured symmetric inputs (for
    /// example equicorrelation matrices) can have their whole top eigenspace
    /// exactly orthogonal to the all-ones direction, so a single start is not
    /// enough. Both starts are deterministic. At most 10,000 iterations each.
    pub fn spectral_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let a = self.scale(1.0 / scale);
        let b = a.transpose().matmul(&a);
        let n = b.rows;

        let ones = vec![1.0; n];
        let mut best = power_iteration(&b, ones);

        let mut rng = crate::rng::SplitMix64::new(0x5EED_0F5E_C701_u64);
        let alt: Vec<f64> = (0..n).map(|_| rng.next_f64() - 0.5).collect();
        best = best.max(power_iteration(&b, alt));

        scale * best.max(0.0).sqrt()
    }
}

fn row_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Top eigenvalue of a symmetric PSD matrix from one start vector.
fn power_iteration(b: &Matrix, start: Vec<f64>) -> f64 {
    let n = b.rows();
    let mut v = start;
    let norm = row_norm(&v);
    if norm == 0.0 {
        return 0.0;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    let mut lambda = 0.0f64;
    let mut y = vec![0.0; n];
    for _ in 0..10_000 {
        for i in 0..n {
            y[i] = b.row(i).iter().zip(&v).map(|(a, x)| a * x).sum();
        }
        let lambda_new: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ynorm = row_norm(&y);
        if ynorm == 0.0 {
            return 0.0;
        }
        for i in 0..n {
            v[i] = y[i] / ynorm;
        }
        if (lambda_new - lambda).abs() <= 1e-9 * lambda_new.abs().max(1e-300) {
            return lambda_new;
        }
        lambda = lambda_new;
    }
    lambda
}

/// Cholesky factor of a symmetric positive-definite matrix: M = L·Lᵀ.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    dim: usize,
    // Row-major dense lower triangle (upper part zero).
    lower: Vec<f64>,
}

/// Factors a symmetric positive-definite matrix.
///
/// Asymmetry up to `SYMMETRY_TOL` relative to the largest entry is treated as
/// floating-point drift and symmetrized away; anything larger is an error.
/// A pivot at or below `dim · eps · max_diagonal` reports
/// [`Error::NotPositiveDefinite`].
pub fn spd_factor(m: &Matrix) -> Result<SpdFactor> {
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot factor a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let scale = m.max_abs();
    let tolerance = SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE);
    let asymmetry = m.max_asymmetry();
    if asymmetry > tolerance {
        return Err(Error::NotSymmetric { asymmetry, tolerance });
    }
    let a = m.symmetrized();

    let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0, f64::max);
    let pivot_floor = n as f64 * f64::EPSILON * max_diag;

    let mut lower = vec![0.0; n * n];
    for k in 0..n {
        let mut d = a.get(k, k);
        for j in 0..k {
            d -= lower[k * n + j] * lower[k * n + j];
        }
        if d <= pivot_floor {
            return Err(Error::NotPositiveDefinite { index: k, pivot: d });
        }
        let lkk = d.sqrt();
        lower[k * n + k] = lkk;
        for i in (k + 1)..n {
            let mut v = a.get(i, k);
            for j in 0..k {
                v -= lower[i * n + j] * lower[k * n + j];
            }
            lower[i * n + k] = v / lkk;
        }
    }
    Ok(SpdFactor { dim: n, lower })
}

impl SpdFactor {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// The lower-triangular factor as a dense matrix.
    pub fn lower(&self) -> Matrix {
        Matrix::from_raw(self.dim, self.dim, self.lower.clone())
    }

    /// L·z, used to turn standard normal draws into correlated ones.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim);
        let n = self.dim;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.lower[i * n + j] * z[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Solves (L·Lᵀ)·x = b for a single right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "factor has dimension {}, right-hand side has {}",
                self.dim,
                b.len()
            )));
        }
        let n = self.dim;
        let mut x = b.to_vec();
        // Forward: L·y = b.
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lower[i * n + j] * x[j];
            }
            x[i] = acc / self.lower[i * n + i];
        }
        // Backward: Lᵀ·x = y.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lower[j * n + i] * x[j];
            }
            x[i] = acc / self.lower[i * n + i];
        }
        Ok(x)
    }

    /// Solves (L·Lᵀ)·X = B column by column.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "factor has dimension {}, right-hand side has {} rows",
                self.dim,
                b.rows()
            )));
        }
        let mut out = Matrix::zeros(b.rows(), b.cols());
        let mut col = vec![0.0; self.dim];
        for j in 0..b.cols() {
            for i in 0..self.dim {
                col[i] = b.get(i, j);
            }
            let x = self.solve_vec(&col)?;
            for i in 0..self.dim {
                out.set(i, j, x[i]);
            }
        }
        Ok(out)
    }

    /// Explicit inverse, formed by solving against the identity.
    ///
    /// Reserved for diagnostic formulas that need a stored inverse (max row
    /// norms of an inverse, inverse diagonals); solvers go through `solve`.
    pub fn inverse(&self) -> Matrix {
        self.solve(&Matrix::identity(self.dim)).expect("identity has matching dimension")
    }
}
