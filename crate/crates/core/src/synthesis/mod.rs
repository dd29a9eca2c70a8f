//! Synthesis of a single relation and of a referencing relation given its
//! (synthetic) referenced relation.

pub mod fk;
pub mod single;

use crate::mrf::EstimateOptions;
use serde::{Deserialize, Serialize};

/// Tunable parameters of the synthesizers; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    /// Order o: letters per permutation tuple.
    pub order: usize,
    /// Correlated attributes kept per target.
    pub n_mrf: usize,
    /// Free structure iterations over stored marginals.
    pub t1: usize,
    /// Paid structure iterations.
    pub t2: usize,
    /// Candidates scored per paid iteration.
    pub k: usize,
    pub lambda: f64,
    /// Inclusive group-size range whose marginals are merged before noising.
    pub merge_interval: Option<(usize, usize)>,
    pub cell_cap: f64,
    /// Largest attribute set considered when a new marginal is bought.
    pub max_candidate_size: usize,
    /// Largest attribute set considered during initialization.
    pub init_candidate_size: usize,
    /// Refinement iterations of the single-relation synthesizer (default: one per attribute).
    pub single_refine_iters: Option<usize>,
    pub estimate: EstimateOptions,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            order: 3,
            n_mrf: 8,
            t1: 10,
            t2: 1,
            k: 4,
            lambda: 6.0,
            merge_interval: None,
            cell_cap: 1e7,
            max_candidate_size: 4,
            init_candidate_size: 3,
            single_refine_iters: None,
            estimate: EstimateOptions::default(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(m.to_string()));
        if self.order == 0 || self.order > 8 {
            return bad("order must lie in 1..=8");
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if self.max_candidate_size == 0 || self.init_candidate_size == 0 {
            return bad("candidate sizes must be positive");
        }
        if let Some((a, b)) = self.merge_interval {
            if a == 0 || a > b {
                return bad("merge interval must satisfy 1 <= lo <= hi");
            }
        }
        Ok(())
    }
}

/// Mean absolute deviation of N(0, σ²) is σ·√(2/π); a marginal is useful when
/// its average cell count is at least λ times that.
pub fn lambda_useful(total: f64, cells: f64, sigma: f64, lambda: f64) -> bool {
    if cells <= 0.0 {
        return false;
    }
    total / cells >= lambda * (2.0 / std::f64::consts::PI).sqrt() * sigma
}

/// Correlation-based feature-selection merit of set `others ∪ {a}` for `a`:
/// relevance to `a` over the square root of size plus internal redundancy.
pub fn cfs(score: impl Fn(usize, usize) -> f64, a: usize, others: &[usize]) -> f64 {
    let rel: f64 = others.iter().map(|&x| score(a, x)).sum();
    let mut red = 0.0;
    for &x in others {
        for &y in others {
            if x != y {
                red += score(x, y);
            }
        }
    }
    rel / ((others.len() + 1) as f64 + red.max(0.0)).sqrt()
}
