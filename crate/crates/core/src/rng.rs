//! Counter-based random numbers: every value is a pure function of
//! (seed, index), so initialization, fixtures and data sampling are
//! bit-identical across runs and never depend on call order.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// splitmix64 finalizer over a seed/counter pair.
#[inline]
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in (0, 1]: the top 53 bits, shifted into the unit interval and
/// nudged off zero so it is always a valid log argument.
#[inline]
fn unit_open_zero(h: u64) -> f64 {
    ((h >> 11) + 1) as f64 / 9_007_199_254_740_992.0 // 2^53
}

/// Uniform in [0, 1).
#[inline]
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / 9_007_199_254_740_992.0
}

/// Standard normal via Box-Muller on two counter draws.
#[inline]
pub fn normal_at(seed: u64, index: u64) -> f64 {
    let u1 = unit_open_zero(mix(seed, index.wrapping_mul(2)));
    let u2 = unit(mix(seed, index.wrapping_mul(2).wrapping_add(1)));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Tensor of N(0, std^2) draws where element i depends only on (seed, i).
pub fn randn_seeded<S: Scalar>(shape: &[usize], std: f64, seed: u64) -> Result<Tensor<S>> {
    Tensor::from_fn(shape, |i| S::of_f64(normal_at(seed, i as u64) * std))
}

/// Sequential convenience stream over the same counter hash. Still
/// reproducible: the state is just (seed, how many draws so far).
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.seed, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * unit(self.next_u64())
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = unit_open_zero(self.next_u64());
        let u2 = unit(self.next_u64());
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    /// tiny against 2^64, bias is unobservable for fixture purposes.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }
}

/// Fisher-Yates permutation of 0..n keyed by (seed, epoch). A pure function:
/// resuming training needs only the step counter to land in the same order.
pub fn seeded_permutation(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = CounterRng::new(mix(seed, epoch ^ 0xA076_1D64_78BD_642F));
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i + 1);
        perm.swap(i, j);
    }
    perm
}
