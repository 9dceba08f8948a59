//! Deterministic pseudorandom numbers for the simulation harness.
//!
//! The generator is SplitMix64: a 64-bit counter stepped by the golden-ratio
//! increment `0x9E3779B97F4A7C15`, with the two-round murmur-style output mix
//! (`0xBF58476D1CE4E5B9`, `0x94D049BB133111EB`). The constants are fixed here
//! so every platform — and any reimplementation — produces the same stream
//! bit for bit. Normal deviates come from the Box–Muller transform and
//! consume exactly two 64-bit draws each, so stream positions are easy to
//! reason about.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 output mix.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_2);
    z ^ (z >> 31)
}

/// SplitMix64 stream.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in [0, 1) built from the top 53 bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in (0, 1]; safe as a logarithm argument.
    #[inline]
    fn next_f64_positive(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate via Box–Muller:
    /// z = sqrt(-2 ln u₁) · cos(2π u₂), with u₁ ∈ (0, 1], u₂ ∈ [0, 1).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.next_f64_positive();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Derives an independent stream seed from a base seed and two lane indices.
///
/// Each word is absorbed with a golden-ratio multiply followed by the
/// SplitMix64 output mix. `(base, a, b)` triples that differ in any lane give
/// unrelated streams, and the mapping is part of the output contract: records
/// are reproducible from the `(base_seed, theta_index, replicate)` triple
/// alone.
pub fn mix_seed(base: u64, lane_a: u64, lane_b: u64) -> u64 {
    let mut z = mix64(base.wrapping_add(GOLDEN_GAMMA));
    z = mix64(z ^ lane_a.wrapping_mul(GOLDEN_GAMMA).wrapping_add(MIX_1));
    z = mix64(z ^ lane_b.wrapping_mul(GOLDEN_GAMMA).wrapping_add(MIX_2));
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn known_answer_for_zero_seed() {
        // First SplitMix64 output for seed 0 is mix64(GOLDEN_GAMMA).
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn uniforms_stay_in_unit_interval() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut rng = SplitMix64::new(123);
        let n = 200_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.standard_normal();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn mixed_seeds_differ_across_lanes() {
        let s = mix_seed(1, 2, 3);
        assert_ne!(s, mix_seed(1, 2, 4));
        assert_ne!(s, mix_seed(1, 3, 3));
        assert_ne!(s, mix_seed(2, 2, 3));
        assert_eq!(s, mix_seed(1, 2, 3));
    }
}
