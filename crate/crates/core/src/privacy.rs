//! Analytic Gaussian mechanism calibration, the privacy-cost ledger, the cost
//! formulas of the per-foreign-key pipeline and budget planning.

use crate::error::{Error, Result};
use crate::rng::gaussian;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Left-hand side of the analytic Gaussian condition for a given γ.
pub fn gaussian_delta(gamma: f64, epsilon: f64) -> f64 {
    let a = phi(gamma / 2.0 - epsilon / gamma);
    let b = phi(-gamma / 2.0 - epsilon / gamma);
    let tail = if b == 0.0 { 0.0 } else { (epsilon + b.ln()).exp() };
    a - tail
}

/// Largest γ whose Gaussian mechanism (cost γ²) satisfies (ε, δ)-DP.
pub fn solve_gamma(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Config(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let f = |g: f64| gaussian_delta(g, epsilon) - delta;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Numeric("no bracket for gamma".into()));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::Numeric("gamma underflow".into()));
    }
    let r = f(lo);
    if !(r.abs() <= 1e-12) {
        return Err(Error::Numeric(format!("gamma residual {r:e} exceeds 1e-12")));
    }
    Ok(lo)
}

/// Classical Gaussian mechanism standard deviation (valid for ε ≤ 1).
pub fn classical_sigma(epsilon: f64, delta: f64, sensitivity: f64) -> f64 {
    sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub label: String,
    pub delta_sensitivity: f64,
    pub sigma: f64,
    pub cost: f64,
}

/// Append-only record of privacy charges against a cost budget γ².
#[derive(Debug, Clone, Serialize)]
pub struct Ledger {
    pub budget: f64,
    pub charges: Vec<Charge>,
    spent: f64,
}

impl Ledger {
    pub fn new(budget: f64) -> Self {
        Ledger { budget, charges: Vec::new(), spent: 0.0 }
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn remaining(&self) -> f64 {
        self.budget - self.spent
    }

    /// Records a query with L2 sensitivity `delta` answered with noise of standard deviation `sigma`.
    pub fn charge(&mut self, label: &str, delta: f64, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Numeric(format!("{label}: sigma must be positive, got {sigma}")));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::Numeric(format!("{label}: invalid sensitivity {delta}")));
        }
        let cost = (delta / sigma).powi(2);
        if self.spent + cost > self.budget {
            return Err(Error::BudgetOverdraw { spent: self.spent, cost, budget: self.budget });
        }
        self.spent += cost;
        self.charges.push(Charge { label: label.to_string(), delta_sensitivity: delta, sigma, cost });
        Ok(cost)
    }

    /// Records a charge whose cost was already accounted elsewhere (e.g. a
    /// parallel composition over disjoint data) with an explicit cost.
    pub fn charge_cost(&mut self, label: &str, delta: f64, cost: f64) -> Result<()> {
        if cost <= 0.0 {
            return Ok(());
        }
        let sigma = delta / cost.sqrt();
        self.charge(label, delta, sigma).map(|_| ())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.charges).expect("charges serialize")
    }
}

/// Charges one query and perturbs `values` in place. A zero sensitivity marks
/// public data: nothing is added and the charge costs nothing.
pub fn charge_and_noise<R: RngCore>(
    ledger: &mut Ledger,
    rng: &mut R,
    label: &str,
    delta: f64,
    sigma: f64,
    values: &mut [f64],
) -> Result<()> {
    ledger.charge(label, delta, sigma)?;
    if delta > 0.0 {
        for v in values.iter_mut() {
            *v += gaussian(rng, sigma);
        }
    }
    Ok(())
}

/// Total cost of one foreign key's pipeline (R-scores, group sizes, MRF construction).
#[allow(clippy::too_many_arguments)]
pub fn cost_one_fk(
    n_household: usize,
    n_individual: usize,
    tau: f64,
    sigma_r: f64,
    sigma_n: f64,
    sigma_h: f64,
    sigma_m: f64,
    t2: usize,
    max_size: usize,
    k: usize,
) -> f64 {
    let h = n_household as f64;
    let i = n_individual as f64;
    let t = tau * tau;
    2.0 * t * (h * h + 2.0 * h * i + 2.0 * i * i - h) / (sigma_r * sigma_r)
        + t / (sigma_n * sigma_n)
        + t * t2 as f64 * max_size as f64 * i * (k as f64 / (sigma_h * sigma_h) + 1.0 / (sigma_m * sigma_m))
}

/// Cost of one MRF construction: `k` h-scores and one NPM query per iteration.
pub fn cost_mrf(tau: f64, k: usize, t2: usize, sigma_h: f64, sigma_m: f64) -> f64 {
    let t = tau * tau;
    t * k as f64 * t2 as f64 / (sigma_h * sigma_h) + t * t2 as f64 / (sigma_m * sigma_m)
}

/// 95% confidence-interval widths of an adversary's estimate of a count of up
/// to `m` tuples, when neighbors remove all of them versus one of them.
pub fn ci_width_demo(m: f64, epsilon: f64, delta: f64) -> Result<(f64, f64, f64)> {
    let gamma = solve_gamma(epsilon, delta)?;
    let one = 2.0 * 1.96 / gamma;
    let all = m * one;
    Ok((all, one, all / one))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// A relation without foreign keys, synthesized on its own.
    Single,
    /// One foreign key of a referencing relation.
    ForeignKey,
}

/// What the planner needs to know about one stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSpec {
    pub name: String,
    pub kind: StageKind,
    pub weight: f64,
    pub tau: f64,
    /// Household attributes excluding the group size (foreign-key stages).
    pub n_household: usize,
    pub n_individual: usize,
    pub max_size: usize,
    pub household_public: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    pub order: usize,
    pub k: usize,
    pub t2: usize,
}

/// Noise scales and cost shares of one foreign key's pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkPlan {
    pub total: f64,
    pub init: f64,
    /// Costs of the four initialization parts: household model, per-size
    /// member models, household–member marginals, member–member marginals.
    pub init_parts: [f64; 4],
    pub sigma_inter: Option<f64>,
    pub sigma_intra: Option<f64>,
    pub sigma_r: Option<f64>,
    pub sigma_n: f64,
    pub sigma_h: Option<f64>,
    pub sigma_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub name: String,
    pub kind: StageKind,
    pub share: f64,
    pub tau: f64,
    pub fk: Option<FkPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    /// γ², the cost budget.
    pub budget: f64,
    pub stages: Vec<StagePlan>,
}

impl BudgetPlan {
    pub fn stage(&self, name: &str) -> Option<&StagePlan> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn planned_total(&self) -> f64 {
        self.stages.iter().map(|s| s.share).sum()
    }
}

/// Headroom kept below γ² so floating-point summation never overdraws.
pub const PLAN_MARGIN: f64 = 1e-10;

fn split(total: f64, weights: &[f64]) -> Vec<f64> {
    let s: f64 = weights.iter().sum();
    if s <= 0.0 {
        return vec![0.0; weights.len()];
    }
    weights.iter().map(|w| total * w / s).collect()
}

pub fn plan_fk(stage: &StageSpec, share: f64, p: &PlanParams) -> FkPlan {
    let t2 = stage.tau * stage.tau;
    let h = stage.n_household;
    let i = stage.n_individual;
    let q = (h * h + 2 * h * i + 2 * i * i).saturating_sub(h) as f64;
    let inter_count = if h > 0 && i > 0 { (h + i) as f64 } else { 0.0 };
    let intra_count = if p.order >= 2 && stage.max_size >= 2 { ((p.order - 1) * i) as f64 } else { 0.0 };
    let active = [
        !stage.household_public,
        i > 0,
        inter_count > 0.0,
        intra_count > 0.0,
    ];
    let any_init = active.iter().any(|a| *a);
    let init = if any_init { share / 2.0 } else { 0.0 };
    let rest = share - init;
    let init_parts_v = split(init, &active.map(|a| if a { 1.0 } else { 0.0 }));
    let init_parts = [init_parts_v[0], init_parts_v[1], init_parts_v[2], init_parts_v[3]];
    let third_count = (p.t2 * stage.max_size * i) as f64;
    let terms = split(rest, &[if q > 0.0 { 1.0 } else { 0.0 }, 1.0, if third_count > 0.0 { 8.0 } else { 0.0 }]);
    let sigma_r = (q > 0.0).then(|| (2.0 * t2 * q / terms[0]).sqrt());
    let sigma_n = (t2 / terms[1]).sqrt();
    let (sigma_h, sigma_m) = if third_count > 0.0 {
        let unit = terms[2] / (10.0 * t2 * third_count);
        (Some((p.k as f64 / unit).sqrt()), Some((1.0 / (9.0 * unit)).sqrt()))
    } else {
        (None, None)
    };
    FkPlan {
        total: share,
        init,
        init_parts,
        sigma_inter: (inter_count > 0.0).then(|| (inter_count * t2 / init_parts[2]).sqrt()),
        sigma_intra: (intra_count > 0.0).then(|| (intra_count * t2 / init_parts[3]).sqrt()),
        sigma_r,
        sigma_n,
        sigma_h,
        sigma_m,
    }
}

/// Splits γ² across stages in proportion to their weights and derives every
/// noise scale in closed form.
pub fn plan_budget(epsilon: f64, delta: f64, stages: &[StageSpec], p: &PlanParams) -> Result<BudgetPlan> {
    let gamma = solve_gamma(epsilon, delta)?;
    let budget = gamma * gamma;
    if stages.iter().any(|s| !(s.weight >= 0.0) || !s.weight.is_finite()) {
        return Err(Error::Config("stage weights must be non-negative".into()));
    }
    if stages.iter().any(|s| !(s.tau > 0.0)) {
        return Err(Error::Config("tau must be positive".into()));
    }
    let weights: Vec<f64> = stages.iter().map(|s| s.weight).collect();
    if !stages.is_empty() && weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("stage weights sum to zero".into()));
    }
    let shares = split(budget * (1.0 - PLAN_MARGIN), &weights);
    let stages = stages
        .iter()
        .zip(shares)
        .map(|(s, share)| StagePlan {
            name: s.name.clone(),
            kind: s.kind,
            share,
            tau: s.tau,
            fk: (s.kind == StageKind::ForeignKey).then(|| plan_fk(s, share, p)),
        })
        .collect();
    Ok(BudgetPlan { epsilon, delta, gamma, budget, stages })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_costs() {
        assert_eq!(cost_one_fk(2, 2, 1.0, 10.0, 5.0, 4.0, 2.0, 1, 4, 4), 0.36 + 0.04 + 4.0);
        assert_eq!(cost_mrf(1.0, 4, 1, 4.0, 2.0), 0.5);
    }

    #[test]
    fn ledger_refuses_overdraw() {
        let mut l = Ledger::new(1.0);
        l.charge("a", 1.0, 2.0).unwrap();
        assert!(matches!(l.charge("b", 1.0, 1.0), Err(Error::BudgetOverdraw { .. })));
        assert_eq!(l.charges.len(), 1);
        assert!(l.charge("c", 1.0, 0.0).is_err());
    }

    #[test]
    fn fk_plan_spends_share() {
        let st = StageSpec {
            name: "x".into(),
            kind: StageKind::ForeignKey,
            weight: 1.0,
            tau: 2.0,
            n_household: 2,
            n_individual: 3,
            max_size: 4,
            household_public: false,
        };
        let p = PlanParams { order: 3, k: 4, t2: 1 };
        let f = plan_fk(&st, 10.0, &p);
        let c = cost_one_fk(2, 3, 2.0, f.sigma_r.unwrap(), f.sigma_n, f.sigma_h.unwrap(), f.sigma_m.unwrap(), 1, 4, 4);
        assert!((c - 5.0).abs() < 1e-12);
        assert!((f.init_parts.iter().sum::<f64>() - 5.0).abs() < 1e-12);
        let inter = 5.0 * 4.0 / f.sigma_inter.unwrap().powi(2);
        assert!((inter - 1.25).abs() < 1e-12);
        let intra = 2.0 * 3.0 * 4.0 / f.sigma_intra.unwrap().powi(2);
        assert!((intra - 1.25).abs() < 1e-12);
        let mrf = cost_mrf(2.0, 4, 1, f.sigma_h.unwrap(), f.sigma_m.unwrap());
        let k_part = 4.0 * 4.0 / f.sigma_h.unwrap().powi(2);
        assert!((k_part * 9.0 - (mrf - k_part)).abs() < 1e-12);
    }
}
