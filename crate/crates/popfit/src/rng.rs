//! Seeded random generation.
//!
//! All randomness flows through [`SeedRng`], a ChaCha8 stream: the
//! algorithm is specified by the `rand_chacha` crate and produces identical
//! streams across platforms and releases, so any artifact generated here can
//! be re-derived from its recorded seed. Sampling on top (uniform doubles,
//! bounded indices, Poisson, Pareto) is implemented in this module from raw
//! 64-bit draws for the same reason.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::ln_gamma;

/// Deterministic generator used by every randomized operation in the crate.
pub struct SeedRng(ChaCha8Rng);

impl SeedRng {
    pub fn new(seed: u64) -> Self {
        SeedRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Derive an independent stream for sub-task `index`.
    pub fn derive(seed: u64, index: u64) -> Self {
        // Distinct fixed stride keeps derived streams disjoint from the
        // plain seed space used by callers.
        SeedRng::new(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform double in [0, 1) with 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in (0, 1].
    #[inline]
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Unbiased uniform index in [0, n) by rejection.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n64 = n as u64;
        let zone = u64::MAX - (u64::MAX % n64);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n64) as usize;
            }
        }
    }

    /// Poisson draw. Inversion by sequential search below mean 30,
    /// transformed rejection (PTRS) above.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        assert!(mean >= 0.0 && mean.is_finite(), "poisson mean must be finite and >= 0");
        if mean == 0.0 {
            0
        } else if mean < 30.0 {
            self.poisson_inversion(mean)
        } else {
            self.poisson_ptrs(mean)
        }
    }

    fn poisson_inversion(&mut self, mean: f64) -> u64 {
        let u = self.uniform();
        let mut p = (-mean).exp();
        let mut cum = p;
        let mut k = 0u64;
        let cap = (mean + 20.0 * mean.sqrt() + 60.0) as u64;
        while u > cum && k < cap {
            k += 1;
            p *= mean / k as f64;
            cum += p;
        }
        k
    }

    // Hörmann's PTRS transformed-rejection sampler.
    fn poisson_ptrs(&mut self, mean: f64) -> u64 {
        let ln_mean = mean.ln();
        let b = 0.931 + 2.53 * mean.sqrt();
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let v_r = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
            if us >= 0.07 && v <= v_r {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
            if lhs <= k * ln_mean - mean - ln_gamma(k + 1.0) {
                return k as u64;
            }
        }
    }

    /// Pareto(alpha, xm) draw by inverse CDF: xm * U^{-1/alpha}, U in (0,1].
    pub fn pareto(&mut self, alpha: f64, xm: f64) -> f64 {
        xm * self.uniform_open_closed().powf(-1.0 / alpha)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
