//! Gaussian population models: priors, group means, shared covariance, and
//! the derived quantities that drive the theory — the population contrast
//! matrix Δ, the discriminant directions Ψ = Σ⁻¹Δ, and their row support A.
//!
//! Also hosts the reference simulation scenario: three equiprobable groups
//! whose means differ on the first `s` coordinates, with a Toeplitz or
//! equicorrelation block over those coordinates and identity elsewhere.

use crate::linalg::{spd_factor, Matrix, SpdFactor};
use crate::stats::restrict_pair;
use crate::{Error, Result};

/// Declaring a row of Ψ nonzero: threshold relative to the largest row norm.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Covariance block structure for the simulation scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaStructure {
    /// Σ_ab = ρ^|a-b| on the block.
    Toeplitz,
    /// Σ_ab = ρ off the diagonal, 1 on it.
    Equicorrelation,
}

impl SigmaStructure {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "toeplitz" => Some(Self::Toeplitz),
            "equicorrelation" => Some(Self::Equicorrelation),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Toeplitz => "toeplitz",
            Self::Equicorrelation => "equicorrelation",
        }
    }
}

/// A Gaussian mixture population with shared covariance, plus its derived
/// contrasts, discriminant directions, and support. Immutable after `derive`.
#[derive(Clone, Debug)]
pub struct PopulationSpec {
    priors: Vec<f64>,
    /// Group means, one row per group (G x p).
    means: Matrix,
    sigma: Matrix,
    sigma_factor: SpdFactor,
    delta: Matrix,
    psi: Matrix,
    support: Vec<usize>,
}

/// Population mean contrasts: column r weighs the first r group means against
/// group r+1,
///
/// ```text
/// Δ_r = √π_{r+1} Σ_{g≤r} π_g (μ_g - μ_{r+1}) / √(Σ_{g≤r} π_g · Σ_{g≤r+1} π_g).
/// ```
pub fn population_contrasts(priors: &[f64], means: &Matrix) -> Result<Matrix> {
    validate_priors(priors)?;
    if means.rows() != priors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} means for {} priors",
            means.rows(),
            priors.len()
        )));
    }
    let groups = priors.len();
    let p = means.cols();
    let mut delta = Matrix::zeros(p, groups - 1);
    let mut head = 0.0; // Σ_{g≤r} π_g
    for r in 0..groups - 1 {
        head += priors[r];
        let scale = priors[r + 1].sqrt() / (head * (head + priors[r + 1])).sqrt();
        for j in 0..p {
            let mut acc = 0.0;
            for g in 0..=r {
                acc += priors[g] * (means.get(g, j) - means.get(r + 1, j));
            }
            delta.set(j, r, scale * acc);
        }
    }
    Ok(delta)
}

fn validate_priors(priors: &[f64]) -> Result<()> {
    if priors.len() < 2 {
        return Err(Error::InvalidPriors);
    }
    let mut sum = 0.0;
    for &p in priors {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidPriors);
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidPriors);
    }
    Ok(())
}

/// Block covariance: the chosen structure on the leading s x s block,
/// identity elsewhere, zero between the blocks.
pub fn build_sigma(structure: SigmaStructure, s: usize, rho: f64, p: usize) -> Result<Matrix> {
    if s > p {
        return Err(Error::IndexOutOfRange { index: s, bound: p });
    }
    match structure {
        SigmaStructure::Toeplitz => {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidCorrelation { rho, structure: "toeplitz" });
            }
        }
        SigmaStructure::Equicorrelation => {
            let lower = if s >= 2 { -1.0 / (s as f64 - 1.0) } else { -1.0 };
            if !(rho > lower && rho < 1.0) {
                return Err(Error::InvalidCorrelation { rho, structure: "equicorrelation" });
            }
        }
    }
    let mut sigma = Matrix::identity(p);
    for a in 0..s {
        for b in 0..s {
            let v = match structure {
                SigmaStructure::Toeplitz => rho.powi((a as i32 - b as i32).abs()),
                SigmaStructure::Equicorrelation => {
                    if a == b {
                        1.0
                    } else {
                        rho
                    }
                }
            };
            sigma.set(a, b, v);
        }
    }
    Ok(sigma)
}

/// The three reference group means: zero; `s` ones; `s/2` ones then `s/2`
/// minus-ones; all padded with `p - s` zeros. Requires even `s ≤ p`.
pub fn scenario_means(p: usize, s: usize) -> Result<Matrix> {
    if s % 2 != 0 {
        return Err(Error::OddSupportSize { s });
    }
    if s > p {
        return Err(Error::IndexOutOfRange { index: s, bound: p });
    }
    let mut means = Matrix::zeros(3, p);
    for j in 0..s {
        means.set(1, j, 1.0);
        means.set(2, j, if j < s / 2 { 1.0 } else { -1.0 });
    }
    Ok(means)
}

impl PopulationSpec {
    /// Derives Δ, Ψ, and the support from priors, means, and an SPD Σ.
    pub fn derive(priors: Vec<f64>, means: Matrix, sigma: Matrix) -> Result<Self> {
        let delta = population_contrasts(&priors, &means)?;
        if sigma.rows() != means.cols() {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{} but means have {} coordinates",
                sigma.rows(),
                sigma.cols(),
                means.cols()
            )));
        }
        let sigma_factor = spd_factor(&sigma)?;
        let psi = sigma_factor.solve(&delta)?;

        let row_norm = |m: &Matrix, i: usize| m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        let max_norm = (0..psi.rows()).map(|i| row_norm(&psi, i)).fold(0.0, f64::max);
        let threshold = SUPPORT_TOL * max_norm;
        let support = (0..psi.rows()).filter(|&i| row_norm(&psi, i) > threshold).collect();

        Ok(Self { priors, means, sigma, sigma_factor, delta, psi, support })
    }

    /// The reference scenario: uniform priors over three groups, scenario
    /// means, and the block covariance.
    pub fn scenario(structure: SigmaStructure, p: usize, s: usize, rho: f64) -> Result<Self> {
        let means = scenario_means(p, s)?;
        let sigma = build_sigma(structure, s, rho, p)?;
        Self::derive(vec![1.0 / 3.0; 3], means, sigma)
    }

    pub fn groups(&self) -> usize {
        self.priors.len()
    }

    pub fn p(&self) -> usize {
        self.sigma.rows()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// Group means, one row per group.
    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn sigma_factor(&self) -> &SpdFactor {
        &self.sigma_factor
    }

    pub fn delta(&self) -> &Matrix {
        &self.delta
    }

    /// Ψ = Σ⁻¹Δ.
    pub fn psi(&self) -> &Matrix {
        &self.psi
    }

    /// Row support of Ψ (0-based, ascending).
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    /// Complement of the support (0-based, ascending).
    pub fn complement(&self) -> Vec<usize> {
        let mut mask = vec![true; self.p()];
        for &i in &self.support {
            mask[i] = false;
        }
        (0..self.p()).filter(|&i| mask[i]).collect()
    }

    /// (Σ_AA, Δ_A) in support order.
    pub fn restricted(&self) -> Result<(Matrix, Matrix)> {
        restrict_pair(&self.sigma, &self.delta, &self.support)
    }

    /// Conditional variance of coordinate j given the support coordinates:
    /// σ_jj·A = Σ_jj - Σ_jA Σ_AA⁻¹ Σ_Aj. Requires j outside A.
    pub fn sigma_conditional(&self, j: usize) -> Result<f64> {
        if j >= self.p() {
            return Err(Error::IndexOutOfRange { index: j, bound: self.p() });
        }
        if self.support.contains(&j) {
            return Err(Error::IndexInSupport { index: j });
        }
        if self.support.is_empty() {
            return Err(Error::EmptySupport);
        }
        let (sigma_aa, _) = self.restricted()?;
        let factor = spd_factor(&sigma_aa)?;
        Ok(conditional_variance(&self.sigma, &factor, &self.support, j)?)
    }

    /// max over j outside A of σ_jj·A.
    pub fn sigma_conditional_max(&self) -> Result<f64> {
        if self.support.is_empty() {
            return Err(Error::EmptySupport);
        }
        let complement = self.complement();
        if complement.is_empty() {
            return Err(Error::NoComplement);
        }
        let (sigma_aa, _) = self.restricted()?;
        let factor = spd_factor(&sigma_aa)?;
        let mut worst = f64::NEG_INFINITY;
        for j in complement {
            worst = worst.max(conditional_variance(&self.sigma, &factor, &self.support, j)?);
        }
        Ok(worst)
    }
}

fn conditional_variance(
    sigma: &Matrix,
    factor_aa: &SpdFactor,
    support: &[usize],
    j: usize,
) -> Result<f64> {
    let cross: Vec<f64> = support.iter().map(|&i| sigma.get(i, j)).collect();
    let solved = factor_aa.solve_vec(&cross)?;
    let quad: f64 = cross.iter().zip(&solved).map(|(a, b)| a * b).sum();
    Ok(sigma.get(j, j) - quad)
}
