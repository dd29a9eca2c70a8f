//! Marginal-based synthesizer for one relation: noisy pairwise scores pick a
//! covering set of low-dimensional marginals, a few more are bought greedily by
//! noisy fit error, and rows are drawn from the fitted random field.

use super::{cfs, lambda_useful, SynthesisConfig};
use crate::error::Result;
use crate::marginals::r_score_term;
use crate::mrf::{estimate, Mrf};
use crate::privacy::Ledger;
use crate::relational::AttributeSpec;
use crate::rng::{gaussian, sample_without_replacement, SeedTree};
use crate::table::{cell_count_f64, Factor, Table};
use serde::Serialize;

pub struct SingleInput<'a> {
    pub label: String,
    pub attrs: &'a [AttributeSpec],
    pub columns: &'a [Vec<u32>],
    /// Per-row weights (default 1); one unit of weight is one neighbor change.
    pub weights: Option<&'a [f64]>,
    /// Attributes that every selected marginal must contain.
    pub required: Vec<usize>,
    pub tau: f64,
    /// Cost share; zero means the data are public and answered exactly.
    pub budget: f64,
    /// Known (already noisy) total weight; skips the count query.
    pub known_total: Option<f64>,
    pub sample: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoisyMarginal {
    pub attrs: Vec<usize>,
    pub table: Table,
    pub noise_var: f64,
}

pub struct SingleOutput {
    pub columns: Option<Vec<Vec<u32>>>,
    pub total: f64,
    pub marginals: Vec<NoisyMarginal>,
    pub model: Mrf,
}

fn weighted_counts(input: &SingleInput, attrs: &[usize]) -> Table {
    let shape: Vec<usize> = attrs.iter().map(|&a| input.attrs[a].domain_size as usize).collect();
    let mut t = Table::zeros(shape);
    let n = input.columns.first().map(|c| c.len()).unwrap_or(0);
    for row in 0..n {
        let mut idx = 0;
        for (k, &a) in attrs.iter().enumerate() {
            idx = idx * t.shape[k] + input.columns[a][row] as usize;
        }
        t.data[idx] += input.weights.map(|w| w[row]).unwrap_or(1.0);
    }
    t
}

fn subsets_up_to(d: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if d >= 31 {
        for a in 0..d {
            out.push(vec![a]);
            for b in a + 1..d {
                out.push(vec![a, b]);
                if max >= 3 {
                    for c in b + 1..d {
                        out.push(vec![a, b, c]);
                    }
                }
            }
        }
        out.retain(|s| s.len() <= max);
        return out;
    }
    for mask in 1u32..(1u32 << d) {
        if (mask.count_ones() as usize) <= max {
            out.push((0..d).filter(|i| mask & (1 << i) != 0).collect());
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

struct Spend<'a> {
    ledger: &'a mut Ledger,
    exact: bool,
}

impl Spend<'_> {
    /// Charges one query and returns a noise draw generator flag.
    fn charge(&mut self, label: &str, delta: f64, sigma: f64) -> Result<()> {
        if self.exact {
            self.ledger.charge(label, 0.0, 1.0).map(|_| ())
        } else {
            self.ledger.charge(label, delta, sigma).map(|_| ())
        }
    }
}

pub fn synthesize_single(
    input: &SingleInput,
    cfg: &SynthesisConfig,
    ledger: &mut Ledger,
    seeds: &SeedTree,
) -> Result<SingleOutput> {
    let d = input.attrs.len();
    let exact = input.budget <= 0.0;
    let tau = input.tau;
    let mut spend = Spend { ledger, exact };
    let domains: Vec<usize> = input.attrs.iter().map(|a| a.domain_size as usize).collect();
    let true_total: f64 = match input.weights {
        Some(w) => w.iter().sum(),
        None => input.columns.first().map(|c| c.len()).unwrap_or(0) as f64,
    };
    let n_pairs = d * d.saturating_sub(1) / 2;
    let refine_cap = cfg.single_refine_iters.unwrap_or(d);

    let mut frac_count = if input.known_total.is_none() { 0.05 } else { 0.0 };
    let frac_r = if n_pairs > 0 { 0.10 } else { 0.0 };
    let frac_refine = if refine_cap > 0 && d > 1 { 0.35 } else { 0.0 };
    let mut frac_init = 1.0 - frac_count - frac_r - frac_refine;
    if d == 0 {
        frac_count = if input.known_total.is_none() { 1.0 } else { 0.0 };
        frac_init = 0.0;
    }
    let b = input.budget;

    let total = match input.known_total {
        Some(t) => t,
        None => {
            let sigma = tau / (b * frac_count).sqrt();
            spend.charge(&format!("{}:count", input.label), tau, sigma)?;
            let mut r = seeds.stream(&format!("{}:count", input.label));
            let noisy = if exact { true_total } else { true_total + gaussian(&mut r, sigma) };
            noisy.round().max(1.0)
        }
    };

    let mut scores = vec![vec![0.0; d]; d];
    if n_pairs > 0 {
        let sigma = 2.0 * tau * (n_pairs as f64 / (b * frac_r)).sqrt();
        let mut r = seeds.stream(&format!("{}:rscore", input.label));
        for i in 0..d {
            for j in i + 1..d {
                let joint = weighted_counts(input, &[i, j]);
                let mi = joint.project(&[0]);
                let mj = joint.project(&[1]);
                let mut v = r_score_term(&joint, &mi, &mj, true_total);
                spend.charge(&format!("{}:rscore:{}~{}", input.label, input.attrs[i].name, input.attrs[j].name), 2.0 * tau, sigma)?;
                if !exact {
                    v += gaussian(&mut r, sigma);
                }
                scores[i][j] = v;
                scores[j][i] = v;
            }
        }
    }
    let score = |a: usize, b: usize| scores[a][b];

    let admissible = |s: &Vec<usize>| {
        (input.required.is_empty() || s.iter().any(|a| input.required.contains(a)))
            && cell_count_f64(&s.iter().map(|&a| domains[a]).collect::<Vec<_>>()) <= cfg.cell_cap
    };
    let candidates: Vec<Vec<usize>> = subsets_up_to(d, cfg.init_candidate_size.max(1)).into_iter().filter(admissible).collect();
    let cells = |s: &Vec<usize>| cell_count_f64(&s.iter().map(|&a| domains[a]).collect::<Vec<_>>());
    let plan_sigma = if exact { 0.0 } else { tau * (d.max(1) as f64 / (b * frac_init)).sqrt() };
    let useful = |s: &Vec<usize>| exact || lambda_useful(total, cells(s), plan_sigma, cfg.lambda);

    // Covering selection.
    let mut selected: Vec<Vec<usize>> = Vec::new();
    let mut covered = vec![false; d];
    let mut attr_order: Vec<usize> = (0..d).collect();
    let strength: Vec<f64> = (0..d).map(|a| (0..d).map(|x| score(a, x)).sum()).collect();
    attr_order.sort_by(|&a, &b| strength[b].partial_cmp(&strength[a]).unwrap().then(a.cmp(&b)));
    for &a in &attr_order {
        if covered[a] {
            continue;
        }
        let mut best: Option<(f64, &Vec<usize>)> = None;
        for s in candidates.iter().filter(|s| s.contains(&a) && useful(s)) {
            let others: Vec<usize> = s.iter().copied().filter(|&x| x != a).collect();
            let m = cfs(score, a, &others);
            if best.map(|(bm, _)| m > bm).unwrap_or(true) {
                best = Some((m, s));
            }
        }
        let pick = match best {
            Some((_, s)) => s.clone(),
            None => {
                let mut s = vec![a];
                if !input.required.is_empty() && !input.required.contains(&a) {
                    s.push(input.required[0]);
                }
                s.sort_unstable();
                s
            }
        };
        for &x in &pick {
            covered[x] = true;
        }
        if !selected.contains(&pick) {
            selected.push(pick);
        }
    }

    let mut pool: Vec<Vec<usize>> =
        candidates.iter().filter(|s| s.len() >= 2 && !selected.contains(s) && useful(s)).cloned().collect();
    let t_refine = if frac_refine > 0.0 { refine_cap.min(pool.len()) } else { 0 };
    if t_refine == 0 {
        frac_init += frac_refine;
    }
    let mut marginals = Vec::new();
    let sigma_init = if selected.is_empty() { 0.0 } else { tau * (selected.len() as f64 / (b * frac_init)).sqrt() };
    let mut rq = seeds.stream(&format!("{}:marginals", input.label));
    let query = |attrs: &Vec<usize>, sigma: f64, label: String, spend: &mut Spend, rq: &mut crate::rng::Stream| -> Result<NoisyMarginal> {
        let mut t = weighted_counts(input, attrs);
        spend.charge(&label, tau, sigma)?;
        if !exact {
            for v in &mut t.data {
                *v += gaussian(rq, sigma);
            }
        }
        Ok(NoisyMarginal { attrs: attrs.clone(), table: t, noise_var: if exact { 0.0 } else { sigma * sigma } })
    };
    for s in &selected {
        let name: Vec<&str> = s.iter().map(|&a| input.attrs[a].name.as_str()).collect();
        marginals.push(query(s, sigma_init, format!("{}:marginal:{}", input.label, name.join("+")), &mut spend, &mut rq)?);
    }
    let factors = |ms: &[NoisyMarginal]| -> Vec<Factor> {
        ms.iter().map(|m| Factor { vars: m.attrs.clone(), table: m.table.clone() }).collect()
    };
    let (mut model, _) = estimate(&domains, &factors(&marginals), &cfg.estimate, None)?;

    if t_refine > 0 {
        let per_iter: Vec<usize> = (0..t_refine).map(|t| cfg.k.min(pool.len() - t)).collect();
        let h_total: usize = per_iter.iter().sum();
        let sigma_h = tau * (h_total as f64 / (b * frac_refine / 7.0)).sqrt();
        let sigma_m = tau * (t_refine as f64 / (b * frac_refine * 6.0 / 7.0)).sqrt();
        let mut rs = seeds.stream(&format!("{}:select", input.label));
        for &kk in per_iter.iter() {
            let picks = sample_without_replacement(&mut rs, pool.len(), kk);
            let mut best: Option<(f64, usize)> = None;
            for &p in &picks {
                let s = &pool[p];
                let real = weighted_counts(input, s);
                let mut fit = model.marginal_table(s);
                fit.scale(total);
                let mut h = real.l1_distance(&fit);
                spend.charge(&format!("{}:hscore", input.label), tau, sigma_h)?;
                if !exact {
                    h += gaussian(&mut rs, sigma_h);
                }
                if best.map(|(bh, _)| h > bh).unwrap_or(true) {
                    best = Some((h, p));
                }
            }
            let (_, p) = best.expect("at least one candidate per iteration");
            let s = pool.remove(p);
            let name: Vec<&str> = s.iter().map(|&a| input.attrs[a].name.as_str()).collect();
            marginals.push(query(&s, sigma_m, format!("{}:marginal:{}", input.label, name.join("+")), &mut spend, &mut rq)?);
            model = estimate(&domains, &factors(&marginals), &cfg.estimate, Some(&model))?.0;
        }
    }

    let columns = if input.sample {
        let n = total.round().max(0.0) as usize;
        let mut r = seeds.stream(&format!("{}:sample", input.label));
        Some(model.sample(n, &mut r))
    } else {
        None
    };
    Ok(SingleOutput { columns, total, marginals, model })
}
