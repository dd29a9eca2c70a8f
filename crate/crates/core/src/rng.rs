//! Named, seed-derived random substreams and Gaussian sampling.
//!
//! Every consumer of randomness asks for a stream by label, so results do not
//! depend on the order in which independent stages run or on thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, label: &str) -> Stream {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(label.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest[..32]);
        ChaCha20Rng::from_seed(key)
    }

    /// A child tree whose streams are disjoint from the parent's.
    pub fn child(&self, label: &str) -> SeedTree {
        let mut r = self.stream(&format!("child:{label}"));
        SeedTree { seed: r.next_u64() }
    }
}

/// Uniform draw in the open interval (0, 1).
pub fn open_unit<R: RngCore>(rng: &mut R) -> f64 {
    loop {
        let bits = rng.next_u64() >> 11;
        if bits != 0 {
            return bits as f64 / (1u64 << 53) as f64;
        }
    }
}

/// Standard normal draw by inverting the CDF.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    let u = open_unit(rng);
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u)
}

pub fn gaussian<R: RngCore>(rng: &mut R, sigma: f64) -> f64 {
    sigma * standard_normal(rng)
}

/// Draws an index with probability proportional to `weights`.
/// Returns `None` when the weights carry no mass.
pub fn categorical<R: RngCore>(rng: &mut R, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let target = open_unit(rng) * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if target < acc {
                return Some(i);
            }
        }
    }
    last
}

/// Uniform integer in `0..n`.
pub fn below<R: RngCore>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0);
    ((open_unit(rng) * n as f64) as usize).min(n - 1)
}

/// Samples `k` distinct indices from `0..n` in draw order.
pub fn sample_without_replacement<R: RngCore>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = i + below(rng, n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

pub fn shuffle<T, R: RngCore>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_label_same_stream() {
        let t = SeedTree::new(7);
        assert_eq!(t.stream("a").next_u64(), t.stream("a").next_u64());
        assert_ne!(t.stream("a").next_u64(), t.stream("b").next_u64());
        assert_ne!(SeedTree::new(8).stream("a").next_u64(), t.stream("a").next_u64());
    }

    #[test]
    fn normal_moments() {
        let mut r = SeedTree::new(1).stream("n");
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| standard_normal(&mut r)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let mut r = SeedTree::new(3).stream("c");
        for _ in 0..1000 {
            let i = categorical(&mut r, &[0.0, 2.0, 0.0, 1.0]).unwrap();
            assert!(i == 1 || i == 3);
        }
        assert!(categorical(&mut r, &[0.0, 0.0]).is_none());
    }

    #[test]
    fn without_replacement_is_distinct() {
        let mut r = SeedTree::new(4).stream("w");
        let mut s = sample_without_replacement(&mut r, 10, 6);
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 6);
    }
}
