//! Synthesis of a referencing relation, one member slot and attribute at a time,
//! from per-group-size random fields built over permutation marginals.

use super::single::{synthesize_single, NoisyMarginal, SingleInput};
use super::{cfs, lambda_useful, SynthesisConfig};
use crate::error::{Error, Result};
use crate::flat::{individuals_in_order, Attr, FlatRelation, FlatSchema, UNSET};
use crate::marginals::{basic_pairs, canonicalize, count_npm, r_score, slots_to_letters, NpmStore, Npm, RScores};
use crate::mrf::{estimate, Mrf};
use crate::privacy::{FkPlan, Ledger};
use crate::relational::Relation;
use crate::rng::{below, categorical, gaussian, sample_without_replacement, shuffle, SeedTree};
use crate::table::{cell_count_f64, Factor, Table};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

/// Noisy R-scores of every basic pair, each charged at sensitivity 2τ.
pub fn noisy_r_scores(
    fr: &FlatRelation,
    o: usize,
    sigma: Option<f64>,
    tau: f64,
    label: &str,
    ledger: &mut Ledger,
    seeds: &SeedTree,
) -> Result<RScores> {
    let mut out = RScores::default();
    let Some(sigma) = sigma else { return Ok(out) };
    let mut rng = seeds.stream(&format!("{label}:rscore"));
    for (a, b) in basic_pairs(&fr.schema, o) {
        let v = r_score(fr, a, b, o)?;
        let name = fr.schema.pr_set_name(&[a, b]);
        ledger.charge(&format!("{label}:rscore:{name}"), 2.0 * tau, sigma)?;
        out.insert(&fr.schema, a, b, v + gaussian(&mut rng, sigma));
    }
    Ok(out)
}

/// Noisy household counts per group size `1..=N` (index 0 unused), rounded
/// half-up and clipped at zero; one query at sensitivity τ.
pub fn noisy_group_sizes(
    fr: &FlatRelation,
    sigma: f64,
    tau: f64,
    label: &str,
    ledger: &mut Ledger,
    seeds: &SeedTree,
) -> Result<Vec<f64>> {
    let counts = fr.size_counts();
    let mut v: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    v[0] = 0.0;
    ledger.charge(&format!("{label}:group-sizes"), tau, sigma)?;
    let mut rng = seeds.stream(&format!("{label}:group-sizes"));
    for x in v.iter_mut().skip(1) {
        *x = (*x + gaussian(&mut rng, sigma) + 0.5).floor().max(0.0);
    }
    Ok(v)
}

/// Model totals: noisy counts floored at one so every size class has a model.
pub fn model_totals(noisy: &[f64]) -> Vec<f64> {
    noisy.iter().enumerate().map(|(s, &x)| if s == 0 { 0.0 } else { x.max(1.0) }).collect()
}

/// Queries the NPMs of a permutation-relation set for every size `D..=N`
/// (one charge), merging sizes in `merge` before noising, and stores them
/// with all roll-ups.
#[allow(clippy::too_many_arguments)]
pub fn query_npms(
    fr: &FlatRelation,
    attrs: &[Attr],
    totals: &[f64],
    o: usize,
    sigma: f64,
    tau: f64,
    merge: Option<(usize, usize)>,
    label: &str,
    ledger: &mut Ledger,
    seeds: &SeedTree,
    store: &mut NpmStore,
) -> Result<()> {
    let d = individuals_in_order(attrs).len();
    if d > o {
        return Err(Error::Domain(format!("{d} letters exceed order {o}")));
    }
    let n = fr.schema.max_size;
    let name = fr.schema.pr_set_name(attrs);
    ledger.charge(&format!("{label}:npm:{name}"), tau, sigma)?;
    let mut rng = seeds.stream(&format!("{label}:npm:{name}"));
    let lo = d.max(1);
    let in_merge = |s: usize| merge.map(|(a, b)| s >= a && s <= b).unwrap_or(false);
    let mut merged: Option<(Table, Vec<usize>)> = None;
    for s in lo..=n {
        let m = count_npm(fr, attrs, s, o)?;
        if in_merge(s) {
            match &mut merged {
                Some((t, sizes)) => {
                    for (a, b) in t.data.iter_mut().zip(&m.table.data) {
                        *a += b;
                    }
                    sizes.push(s);
                }
                None => merged = Some((m.table, vec![s])),
            }
        } else {
            let mut t = m.table;
            for v in &mut t.data {
                *v += gaussian(&mut rng, sigma);
            }
            store.insert_with_rollups(&Npm { attrs: attrs.to_vec(), size: s, table: t }, sigma * sigma);
        }
    }
    if let Some((mut t, sizes)) = merged {
        for v in &mut t.data {
            *v += gaussian(&mut rng, sigma);
        }
        let denom: f64 = sizes.iter().map(|&s| totals[s]).sum();
        for &s in &sizes {
            let f = if denom > 0.0 { totals[s] / denom } else { 1.0 / sizes.len() as f64 };
            let mut ts = t.clone();
            ts.scale(f);
            store.insert_with_rollups(&Npm { attrs: attrs.to_vec(), size: s, table: ts }, sigma * sigma * f * f);
        }
    }
    Ok(())
}

/// Slices marginals over household attributes that include the group size
/// into household-only NPMs per size.
pub fn decompose_marginals(
    marginals: &[NoisyMarginal],
    size_attr: usize,
    max_size: usize,
    store: &mut NpmStore,
) {
    for m in marginals {
        let Some(p) = m.attrs.iter().position(|&a| a == size_attr) else { continue };
        if m.attrs.len() < 2 {
            continue;
        }
        let rest: Vec<usize> = (0..m.attrs.len()).filter(|&i| i != p).collect();
        let attrs: Vec<Attr> = rest.iter().map(|&i| Attr::household(m.attrs[i])).collect();
        let shape: Vec<usize> = rest.iter().map(|&i| m.table.shape[i]).collect();
        for s in 1..=max_size.min(m.table.shape[p] - 1) {
            let mut t = Table::zeros(shape.clone());
            for (f, v) in m.table.data.iter().enumerate() {
                let idx = m.table.unflatten(f);
                if idx[p] == s {
                    let sub: Vec<usize> = rest.iter().map(|&i| idx[i]).collect();
                    let k = t.flat_index(&sub);
                    t.data[k] += v;
                }
            }
            store.insert_with_rollups(&Npm { attrs: attrs.clone(), size: s, table: t }, m.noise_var);
        }
    }
}

/// Top `n` attributes of `pool` by noisy R-score with `target`; ties favour
/// household attributes, then lower slots, then schema order.
pub fn select_correlated(schema: &FlatSchema, target: Attr, pool: &[Attr], scores: &RScores, n: usize) -> Vec<Attr> {
    let mut cand: Vec<(f64, Attr)> = pool
        .iter()
        .filter(|a| **a != target && !(a.is_household() && a.base as usize == schema.size_attr))
        .map(|&a| (scores.get(schema, target, a), a))
        .collect();
    cand.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));
    cand.truncate(n);
    cand.into_iter().map(|(_, a)| a).collect()
}

/// Σ_s ‖npm_s − total_s · p_s‖₁ over the given sizes.
pub fn h_score(npms: &[(usize, Table)], models: &BTreeMap<usize, Mrf>, vars: &[usize], totals: &[f64]) -> f64 {
    npms.iter()
        .map(|(s, t)| {
            let mut p = models[s].marginal_table(vars);
            p.scale(totals[*s]);
            t.l1_distance(&p)
        })
        .sum()
}

/// The per-size models for one target attribute.
pub struct TargetModel {
    /// Model variable i is flattened attribute `vars[i]`; `vars[0]` is the target.
    pub vars: Vec<Attr>,
    pub structure: Vec<Vec<usize>>,
    pub models: BTreeMap<usize, Mrf>,
}

pub struct FkSynthesis<'a> {
    pub label: String,
    pub real: &'a FlatRelation,
    pub plan: &'a FkPlan,
    pub tau: f64,
    pub cfg: &'a SynthesisConfig,
    pub seeds: SeedTree,
    pub scores: RScores,
    /// Noisy household counts per size (index 0 unused).
    pub sizes: Vec<f64>,
    pub totals: Vec<f64>,
    pub store: NpmStore,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetReport {
    pub target: String,
    pub correlated: Vec<String>,
    pub structure: Vec<String>,
    pub bought: Option<String>,
}

impl<'a> FkSynthesis<'a> {
    fn schema(&self) -> &FlatSchema {
        &self.real.schema
    }

    fn domains(&self, vars: &[Attr]) -> Vec<usize> {
        vars.iter().map(|a| self.schema().domain(*a)).collect()
    }

    fn sizes_for(&self, slot: usize) -> Vec<usize> {
        (slot + 1..=self.schema().max_size).collect()
    }

    fn fit(
        &self,
        vars: &[Attr],
        structure: &[Vec<usize>],
        sizes: &[usize],
        warm: Option<&BTreeMap<usize, Mrf>>,
    ) -> Result<BTreeMap<usize, Mrf>> {
        let domains = self.domains(vars);
        let o = self.cfg.order;
        let fits: Vec<Result<(usize, Mrf)>> = sizes
            .par_iter()
            .map(|&s| {
                let mut targets = Vec::new();
                for clique in structure {
                    let fr_attrs: Vec<Attr> = clique.iter().map(|&v| vars[v]).collect();
                    let t = self.store.instantiate(self.schema(), &fr_attrs, s, o)?;
                    targets.push(Factor { vars: clique.clone(), table: t });
                }
                let w = warm.and_then(|m| m.get(&s));
                let (m, _) = estimate(&domains, &targets, &self.cfg.estimate, w)?;
                Ok((s, m))
            })
            .collect();
        fits.into_iter().collect()
    }

    fn set_cells(&self, vars: &[Attr], set: &[usize]) -> f64 {
        cell_count_f64(&set.iter().map(|&v| self.schema().domain(vars[v])).collect::<Vec<_>>())
    }

    fn useful(&self, letters: usize, cells: f64, sigma: f64) -> bool {
        let lo = letters.max(1);
        let sizes = (lo..=self.schema().max_size).count() as f64;
        let total: f64 = (lo..=self.schema().max_size).map(|s| self.totals[s]).sum();
        lambda_useful(total, sizes * cells, sigma, self.cfg.lambda)
    }

    /// Builds the per-size models for `target` given the attributes sampled so far.
    pub fn construct(&mut self, target: Attr, synthesized: &[Attr], ledger: &mut Ledger) -> Result<(TargetModel, TargetReport)> {
        let cfg = self.cfg.clone();
        let o = cfg.order;
        let slot = target.slot().expect("targets are member attributes");
        let correlated = select_correlated(self.schema(), target, synthesized, &self.scores, cfg.n_mrf);
        let mut vars = vec![target];
        vars.extend(correlated.iter().copied());
        let sizes = self.sizes_for(slot);
        let nv = vars.len();
        let subsets: Vec<Vec<usize>> = (1u32..(1u32 << nv))
            .map(|m| (0..nv).filter(|i| m & (1 << i) != 0).collect::<Vec<usize>>())
            .filter(|s: &Vec<usize>| {
                let fr: Vec<Attr> = s.iter().map(|&v| vars[v]).collect();
                individuals_in_order(&fr).len() <= o
            })
            .collect();
        let stored_everywhere = |store: &NpmStore, s: &Vec<usize>| {
            let pr = slots_to_letters(&s.iter().map(|&v| vars[v]).collect::<Vec<_>>());
            sizes.iter().all(|&z| store.contains(&pr, z))
        };
        // Stored one-way marginals seed the structure for free.
        let mut structure: Vec<Vec<usize>> =
            (0..nv).map(|v| vec![v]).filter(|s| stored_everywhere(&self.store, s)).collect();
        let mut models = self.fit(&vars, &structure, &sizes, None)?;
        let covered = |structure: &Vec<Vec<usize>>, s: &Vec<usize>| {
            structure.iter().any(|c| s.iter().all(|x| c.contains(x)))
        };
        let mut free: Vec<Vec<usize>> = subsets
            .iter()
            .filter(|s| s.len() >= 2 && self.set_cells(&vars, s) <= cfg.cell_cap && stored_everywhere(&self.store, s))
            .cloned()
            .collect();
        let noisy_npms = |this: &Self, s: &Vec<usize>| -> Result<Vec<(usize, Table)>> {
            let fr: Vec<Attr> = s.iter().map(|&v| vars[v]).collect();
            sizes.iter().map(|&z| Ok((z, this.store.instantiate(this.schema(), &fr, z, o)?))).collect()
        };
        for _ in 0..cfg.t1 {
            free.retain(|s| !covered(&structure, s));
            let mut best: Option<(f64, usize)> = None;
            for (i, s) in free.iter().enumerate() {
                let h = h_score(&noisy_npms(self, s)?, &models, s, &self.totals);
                if best.map(|(b, _)| h > b).unwrap_or(true) {
                    best = Some((h, i));
                }
            }
            let Some((_, i)) = best else { break };
            let s = free.remove(i);
            structure.push(s);
            match self.fit(&vars, &structure, &sizes, Some(&models)) {
                Ok(m) => models = m,
                Err(Error::WidthExceeded { .. }) => {
                    structure.pop();
                }
                Err(e) => return Err(e),
            }
        }

        let mut bought = None;
        if let (Some(sigma_h), Some(sigma_m)) = (self.plan.sigma_h, self.plan.sigma_m) {
            let tslot = self.seeds.stream(&format!("{}:select:{}", self.label, self.schema().fr_name(target)));
            let mut rng = tslot;
            for it in 0..cfg.t2 {
                let mut pool: Vec<Vec<usize>> = subsets
                    .iter()
                    .filter(|s| {
                        let fr: Vec<Attr> = s.iter().map(|&v| vars[v]).collect();
                        s.contains(&0)
                            && s.len() <= cfg.max_candidate_size
                            && !covered(&structure, s)
                            && !stored_everywhere(&self.store, s)
                            && self.set_cells(&vars, s) <= cfg.cell_cap
                            && self.useful(individuals_in_order(&fr).len(), self.set_cells(&vars, s), sigma_m)
                    })
                    .cloned()
                    .collect();
                if pool.is_empty() {
                    pool.push(vec![0]);
                }
                let picks = sample_without_replacement(&mut rng, pool.len(), cfg.k);
                // Fewer candidates than k: spend the same budget on less noise.
                let sigma_eff = sigma_h * (picks.len() as f64 / cfg.k as f64).sqrt();
                let mut best: Option<(f64, usize)> = None;
                for &p in &picks {
                    let s = &pool[p];
                    let pr = slots_to_letters(&s.iter().map(|&v| vars[v]).collect::<Vec<_>>());
                    let mut real = Vec::new();
                    for &z in &sizes {
                        real.push((z, count_npm(self.real, &pr, z, o)?.table));
                    }
                    let name = self.schema().pr_set_name(&pr);
                    ledger.charge(&format!("{}:hscore:{}:{}", self.label, self.schema().fr_name(target), name), self.tau, sigma_eff)?;
                    let h = h_score(&real, &models, s, &self.totals) + gaussian(&mut rng, sigma_eff);
                    if best.map(|(b, _)| h > b).unwrap_or(true) {
                        best = Some((h, p));
                    }
                }
                let (_, p) = best.unwrap();
                let s = pool[p].clone();
                let fr: Vec<Attr> = s.iter().map(|&v| vars[v]).collect();
                let (pr, _) = canonicalize(&slots_to_letters(&fr));
                let label = format!("{}:step{}:{}", self.label, it, self.schema().fr_name(target));
                query_npms(
                    self.real,
                    &pr,
                    &self.totals,
                    o,
                    sigma_m,
                    self.tau,
                    cfg.merge_interval,
                    &label,
                    ledger,
                    &self.seeds,
                    &mut self.store,
                )?;
                bought = Some(self.schema().pr_set_name(&pr));
                structure.push(s);
                match self.fit(&vars, &structure, &sizes, Some(&models)) {
                    Ok(m) => models = m,
                    Err(Error::WidthExceeded { .. }) => {
                        log::warn!("{label}: bought marginal does not fit the width cap; left out of the model");
                        structure.pop();
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let names = |s: &Vec<usize>| {
            let parts: Vec<String> = s.iter().map(|&v| self.schema().fr_name(vars[v])).collect();
            format!("{{{}}}", parts.join(", "))
        };
        let report = TargetReport {
            target: self.schema().fr_name(target),
            correlated: correlated.iter().map(|a| self.schema().fr_name(*a)).collect(),
            structure: structure.iter().map(names).collect(),
            bought,
        };
        Ok((TargetModel { vars, structure, models }, report))
    }
}

/// Rows of an earlier synthetic version of the referencing relation that later
/// pipelines must reuse.
pub struct Pool<'a> {
    pub columns: &'a [Vec<u32>],
}

impl Pool<'_> {
    fn len(&self) -> usize {
        self.columns.first().map(|c| c.len()).unwrap_or(0)
    }

    fn matches(&self, row: usize, fixed: &[(usize, u32)]) -> bool {
        fixed.iter().all(|&(b, v)| self.columns[b][row] == v)
    }
}

/// Orders member attributes within a slot by descending total noisy R-score
/// against the household attributes.
pub fn slot_attribute_order(schema: &FlatSchema, scores: &RScores) -> Vec<usize> {
    let h = schema.household_without_size();
    let mut order: Vec<(f64, usize)> = (0..schema.n_individual())
        .map(|b| {
            let s: f64 = h.iter().map(|&x| scores.get(schema, Attr::household(x), Attr::individual(0, b))).sum();
            (s, b)
        })
        .collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));
    order.into_iter().map(|(_, b)| b).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FkReport {
    pub label: String,
    pub noisy_group_sizes: Vec<f64>,
    pub targets: Vec<TargetReport>,
    pub stored_marginals: usize,
}

pub struct FkOutput {
    /// Household columns of `flat` are those of the synthetic referenced relation.
    pub flat: FlatRelation,
    /// Pool row drawn for each (household, slot) when a pool was given.
    pub pool_rows: Option<Vec<Vec<usize>>>,
    pub report: FkReport,
    pub store: NpmStore,
    pub models: Vec<TargetModel>,
}

pub struct FkInput<'a> {
    pub label: String,
    pub real: &'a FlatRelation,
    /// Real referenced relation with size attributes (for the household part of initialization).
    pub households: &'a Relation,
    pub households_public: bool,
    /// Number of leading household attributes that come from the schema.
    pub household_schema_attrs: usize,
    /// Synthetic referenced relation with the same attributes; `None` when the
    /// referenced relation is public and only its group sizes are synthesized.
    pub synthetic_households: Option<&'a Relation>,
    /// Noisy marginals of the referenced relation's own synthesis, if any.
    pub household_marginals: &'a [NoisyMarginal],
    pub plan: &'a FkPlan,
    pub tau: f64,
    pub pool: Option<Pool<'a>>,
}

fn candidate_sets(attrs: &[Attr], max: usize) -> Vec<Vec<Attr>> {
    let n = attrs.len();
    let mut out = Vec::new();
    for a in 0..n {
        out.push(vec![attrs[a]]);
        for b in a + 1..n {
            out.push(vec![attrs[a], attrs[b]]);
            if max >= 3 {
                for c in b + 1..n {
                    out.push(vec![attrs[a], attrs[b], attrs[c]]);
                }
            }
        }
    }
    out.retain(|s| s.len() <= max);
    out
}

/// Seeds the marginal store: household marginals with the group size, per-size
/// member models, household–member and member–member marginals chosen by CFS.
pub fn initialize_store(
    input: &FkInput,
    ctx: &mut FkSynthesis,
    ledger: &mut Ledger,
) -> Result<()> {
    let schema = input.real.schema.clone();
    let n = schema.max_size;
    let cfg = ctx.cfg.clone();
    let o = cfg.order;
    let parts = input.plan.init_parts;
    decompose_marginals(input.household_marginals, schema.size_attr, n, &mut ctx.store);

    // Household part.
    if input.households_public {
        let cols: Vec<Vec<u32>> = input.households.columns[..input.household_schema_attrs].to_vec();
        let attrs = &input.households.attributes[..input.household_schema_attrs];
        let out = synthesize_single(
            &SingleInput {
                label: format!("{}:init:households", input.label),
                attrs,
                columns: &cols,
                weights: None,
                required: Vec::new(),
                tau: input.tau,
                budget: 0.0,
                known_total: Some(input.households.len() as f64),
                sample: false,
            },
            &cfg,
            ledger,
            &ctx.seeds,
        )?;
        let hn = input.households.len().max(1) as f64;
        for m in &out.marginals {
            let attrs: Vec<Attr> = m.attrs.iter().map(|&a| Attr::household(a)).collect();
            for s in 1..=n {
                let mut t = m.table.clone();
                t.scale(ctx.sizes[s] / hn);
                ctx.store.insert_with_rollups(&Npm { attrs: attrs.clone(), size: s, table: t }, 0.0);
            }
        }
    } else if parts[0] > 0.0 {
        let out = synthesize_single(
            &SingleInput {
                label: format!("{}:init:households", input.label),
                attrs: &input.households.attributes,
                columns: &input.households.columns,
                weights: None,
                required: vec![schema.size_attr],
                tau: input.tau,
                budget: parts[0],
                known_total: None,
                sample: false,
            },
            &cfg,
            ledger,
            &ctx.seeds,
        )?;
        decompose_marginals(&out.marginals, schema.size_attr, n, &mut ctx.store);
    }

    // Per-size member models; sizes partition the households, so their costs compose in parallel.
    if parts[1] > 0.0 {
        let mut worst = 0.0f64;
        for s in 1..=n {
            let rows = input.real.rows_of_size(s);
            let ni = schema.n_individual();
            let mut cols = vec![Vec::new(); ni];
            let mut w = Vec::new();
            for &r in &rows {
                for m in 0..s {
                    for b in 0..ni {
                        cols[b].push(input.real.member_value(r, m, b));
                    }
                    w.push(1.0 / s as f64);
                }
            }
            let mut sub = Ledger::new(parts[1] * (1.0 + 1e-9));
            let out = synthesize_single(
                &SingleInput {
                    label: format!("{}:init:members:{s}", input.label),
                    attrs: &schema.individual_attrs,
                    columns: &cols,
                    weights: Some(&w),
                    required: Vec::new(),
                    tau: input.tau,
                    budget: parts[1],
                    known_total: Some(ctx.totals[s]),
                    sample: false,
                },
                &cfg,
                &mut sub,
                &ctx.seeds,
            )?;
            worst = worst.max(sub.spent());
            for m in &out.marginals {
                let attrs: Vec<Attr> = m.attrs.iter().map(|&b| Attr::individual(0, b)).collect();
                ctx.store.insert_with_rollups(&Npm { attrs, size: s, table: m.table.clone() }, m.noise_var);
            }
        }
        ledger.charge_cost(&format!("{}:init:members", input.label), input.tau, worst)?;
    }

    let score = |a: &Attr, b: &Attr| ctx.scores.get(&schema, *a, *b);
    let pick = |attrs: &[Attr], target: Attr, pool: &[Vec<Attr>]| -> Option<Vec<Attr>> {
        let mut best: Option<(f64, &Vec<Attr>)> = None;
        for s in pool.iter().filter(|s| s.contains(&target)) {
            let others: Vec<usize> = s.iter().filter(|a| **a != target).map(|a| attrs.iter().position(|x| x == a).unwrap()).collect();
            let t = attrs.iter().position(|x| *x == target).unwrap();
            let m = cfs(|i, j| score(&attrs[i], &attrs[j]), t, &others);
            if best.map(|(b, _)| m > b).unwrap_or(true) {
                best = Some((m, s));
            }
        }
        best.map(|(_, s)| s.clone())
    };

    // Household–member marginals.
    if let Some(sigma_plan) = input.plan.sigma_inter {
        let mut attrs: Vec<Attr> = schema.household_without_size().into_iter().map(Attr::household).collect();
        attrs.extend((0..schema.n_individual()).map(|b| Attr::individual(0, b)));
        let all: Vec<Vec<Attr>> = candidate_sets(&attrs, cfg.init_candidate_size)
            .into_iter()
            .filter(|s| {
                s.iter().any(|a| a.is_household())
                    && s.iter().any(|a| !a.is_household())
                    && cell_count_f64(&schema.shape(s)) <= cfg.cell_cap
            })
            .collect();
        let pool: Vec<Vec<Attr>> = all.iter().filter(|s| ctx.useful(1, cell_count_f64(&schema.shape(s)), sigma_plan)).cloned().collect();
        let pairs: Vec<Vec<Attr>> = all.iter().filter(|s| s.len() == 2).cloned().collect();
        let mut chosen: Vec<Vec<Attr>> = Vec::new();
        for &a in &attrs {
            if let Some(s) = pick(&attrs, a, &pool).or_else(|| pick(&attrs, a, &pairs)) {
                let (c, _) = canonicalize(&s);
                if !chosen.contains(&c) {
                    chosen.push(c);
                }
            } else {
                log::info!("{}: no useful household-member marginal for {}", input.label, schema.pr_name(a));
            }
        }
        if !chosen.is_empty() {
            let sigma = input.tau * (chosen.len() as f64 / input.plan.init_parts[2]).sqrt();
            for s in &chosen {
                query_npms(input.real, s, &ctx.totals, o, sigma, input.tau, cfg.merge_interval, &format!("{}:init:inter", input.label), ledger, &ctx.seeds, &mut ctx.store)?;
            }
        }
    }

    // Member–member marginals across letters.
    if let Some(sigma_plan) = input.plan.sigma_intra {
        let mut chosen: Vec<Vec<Attr>> = Vec::new();
        for i in 1..o.min(n) {
            let attrs: Vec<Attr> = (0..=i).flat_map(|l| (0..schema.n_individual()).map(move |b| Attr::individual(l, b))).collect();
            let all: Vec<Vec<Attr>> = candidate_sets(&attrs, cfg.init_candidate_size)
                .into_iter()
                .filter(|s| individuals_in_order(s).len() == i + 1 && cell_count_f64(&schema.shape(s)) <= cfg.cell_cap)
                .collect();
            let pool: Vec<Vec<Attr>> =
                all.iter().filter(|s| ctx.useful(i + 1, cell_count_f64(&schema.shape(s)), sigma_plan)).cloned().collect();
            let smallest = all.iter().map(|s| s.len()).min().unwrap_or(0);
            let fallback: Vec<Vec<Attr>> = all.iter().filter(|s| s.len() == smallest).cloned().collect();
            for b in 0..schema.n_individual() {
                let a = Attr::individual(i, b);
                if let Some(s) = pick(&attrs, a, &pool).or_else(|| pick(&attrs, a, &fallback)) {
                    let (c, _) = canonicalize(&s);
                    if !chosen.contains(&c) {
                        chosen.push(c);
                    }
                } else {
                    log::info!("{}: no useful member-member marginal for {}", input.label, schema.pr_name(a));
                }
            }
        }
        if !chosen.is_empty() {
            let sigma = input.tau * (chosen.len() as f64 / input.plan.init_parts[3]).sqrt();
            for s in &chosen {
                query_npms(input.real, s, &ctx.totals, o, sigma, input.tau, cfg.merge_interval, &format!("{}:init:intra", input.label), ledger, &ctx.seeds, &mut ctx.store)?;
            }
        }
    }
    Ok(())
}

/// Runs the whole pipeline for one foreign key: scores, group sizes, store
/// initialization, then slot-major attribute-by-attribute sampling.
pub fn synthesize_fk(
    input: FkInput,
    cfg: &SynthesisConfig,
    ledger: &mut Ledger,
    seeds: &SeedTree,
) -> Result<FkOutput> {
    let schema = input.real.schema.clone();
    let o = cfg.order;
    let scores = noisy_r_scores(input.real, o, input.plan.sigma_r, input.tau, &input.label, ledger, seeds)?;
    let sizes = noisy_group_sizes(input.real, input.plan.sigma_n, input.tau, &input.label, ledger, seeds)?;
    let totals = model_totals(&sizes);
    let mut ctx = FkSynthesis {
        label: input.label.clone(),
        real: input.real,
        plan: input.plan,
        tau: input.tau,
        cfg,
        seeds: *seeds,
        scores,
        sizes: sizes.clone(),
        totals,
        store: NpmStore::new(),
    };
    initialize_store(&input, &mut ctx, ledger)?;

    let n = schema.max_size;
    let public_households;
    let households = match input.synthetic_households {
        Some(h) => h,
        None => {
            public_households = with_sampled_sizes(input.households, schema.size_attr, &sizes, &seeds.stream(&format!("{}:public-sizes", input.label)))?;
            &public_households
        }
    };
    let mut flat = crate::flat::skeleton(households, schema.size_attr, &schema.individual_attrs, n);
    let within = slot_attribute_order(&schema, &ctx.scores);
    let mut synthesized: Vec<Attr> = schema.household_without_size().into_iter().map(Attr::household).collect();
    let mut reports = Vec::new();
    let mut models = Vec::new();
    let mut pool_rows: Option<Vec<Vec<usize>>> = input.pool.as_ref().map(|_| vec![vec![usize::MAX; n]; flat.len()]);
    // Pool rows by value, shuffled; unused rows are handed out first.
    let mut pool_index: HashMap<Vec<u32>, (Vec<usize>, usize)> = HashMap::new();
    if let Some(p) = &input.pool {
        for r in 0..p.len() {
            let key: Vec<u32> = p.columns.iter().map(|c| c[r]).collect();
            pool_index.entry(key).or_default().0.push(r);
        }
        let mut rng = seeds.stream(&format!("{}:pool-order", input.label));
        let mut entries: Vec<(&Vec<u32>, &mut (Vec<usize>, usize))> = pool_index.iter_mut().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (_, (rows, _)) in entries {
            shuffle(&mut rng, rows);
        }
    }

    for slot in 0..n {
        let mut fixed_in_slot: Vec<usize> = Vec::new();
        for &b in &within {
            let target = Attr::individual(slot, b);
            let (model, report) = ctx.construct(target, &synthesized, ledger)?;
            sample_target(&mut flat, &model, &input.pool, &fixed_in_slot, seeds, &input.label, &schema)?;
            reports.push(report);
            models.push(model);
            synthesized.push(target);
            fixed_in_slot.push(b);
        }
        if let (Some(pool), Some(assign)) = (&input.pool, pool_rows.as_mut()) {
            let mut rng = seeds.stream(&format!("{}:pool:{slot}", input.label));
            for row in 0..flat.len() {
                if flat.sizes[row] <= slot {
                    continue;
                }
                let key: Vec<u32> = (0..schema.n_individual()).map(|b| flat.member_value(row, slot, b)).collect();
                let r = match pool_index.get_mut(&key) {
                    Some((rows, next)) if *next < rows.len() => {
                        *next += 1;
                        rows[*next - 1]
                    }
                    Some((rows, _)) => rows[below(&mut rng, rows.len())],
                    None => {
                        let r = below(&mut rng, pool.len());
                        for b in 0..schema.n_individual() {
                            flat.slot_column_mut(slot, b)[row] = pool.columns[b][r];
                        }
                        r
                    }
                };
                assign[row][slot] = r;
            }
        }
    }
    let report = FkReport {
        label: input.label.clone(),
        noisy_group_sizes: sizes,
        targets: reports,
        stored_marginals: ctx.store.len(),
    };
    Ok(FkOutput { flat, pool_rows, report, store: ctx.store, models })
}

/// A copy of a public referenced relation whose group-size column is drawn
/// from the noisy size counts; rows left over get size zero and excess counts
/// are scaled down proportionally.
pub fn with_sampled_sizes(households: &Relation, size_attr: usize, noisy: &[f64], rng: &crate::rng::Stream) -> Result<Relation> {
    let mut rng = rng.clone();
    let n = households.len();
    let mut counts: Vec<usize> = noisy.iter().map(|&x| x.max(0.0) as usize).collect();
    counts[0] = 0;
    let total: usize = counts.iter().sum();
    if total > n {
        log::warn!("noisy group sizes cover {total} rows of a {n}-row public relation; scaling down");
        let f = n as f64 / total as f64;
        let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * f).collect();
        counts = exact.iter().map(|x| x.floor() as usize).collect();
        let mut rem: Vec<(f64, usize)> = exact.iter().enumerate().map(|(s, x)| (x - x.floor(), s)).collect();
        rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let short = n - counts.iter().sum::<usize>();
        for &(_, s) in rem.iter().take(short) {
            counts[s] += 1;
        }
    }
    counts[0] = n - counts.iter().skip(1).sum::<usize>();
    let mut sizes: Vec<u32> = Vec::with_capacity(n);
    for (s, &c) in counts.iter().enumerate() {
        sizes.extend(std::iter::repeat(s as u32).take(c));
    }
    shuffle(&mut rng, &mut sizes);
    let mut out = households.clone();
    out.columns[size_attr] = sizes;
    Ok(out)
}

fn sample_target(
    flat: &mut FlatRelation,
    model: &TargetModel,
    pool: &Option<Pool>,
    fixed_in_slot: &[usize],
    seeds: &SeedTree,
    label: &str,
    schema: &FlatSchema,
) -> Result<()> {
    let target = model.vars[0];
    let slot = target.slot().unwrap();
    let b = target.base as usize;
    let mut pool_cache: HashMap<Vec<u32>, Vec<f64>> = HashMap::new();
    for (&s, mrf) in &model.models {
        let mut rng = seeds.stream(&format!("{label}:sample:{}:{s}", schema.fr_name(target)));
        let mut cache: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
        for row in 0..flat.len() {
            if flat.sizes[row] != s {
                continue;
            }
            let mut assign = vec![0usize; model.vars.len()];
            for (i, a) in model.vars.iter().enumerate().skip(1) {
                let v = flat.value(row, *a);
                debug_assert!(v != UNSET);
                assign[i] = v as usize;
            }
            let dist = cache.entry(assign.clone()).or_insert_with(|| mrf.conditional_given_all(0, &assign)).clone();
            let weights = match pool {
                None => dist,
                Some(p) => {
                    let prefix: Vec<u32> = fixed_in_slot.iter().map(|&fb| flat.member_value(row, slot, fb)).collect();
                    let counts = pool_cache
                        .entry(prefix.clone())
                        .or_insert_with(|| {
                            let fixed: Vec<(usize, u32)> = fixed_in_slot.iter().copied().zip(prefix.iter().copied()).collect();
                            let mut c = vec![0.0; dist.len()];
                            for r in 0..p.len() {
                                if p.matches(r, &fixed) {
                                    c[p.columns[b][r] as usize] += 1.0;
                                }
                            }
                            c
                        })
                        .clone();
                    let restricted: Vec<f64> =
                        dist.iter().zip(&counts).map(|(d, c)| if *c > 0.0 { *d } else { 0.0 }).collect();
                    if restricted.iter().sum::<f64>() > 0.0 {
                        restricted
                    } else {
                        counts
                    }
                }
            };
            let x = match categorical(&mut rng, &weights) {
                Some(x) => x,
                None => below(&mut rng, weights.len()),
            };
            flat.slot_column_mut(slot, b)[row] = x as u32;
        }
    }
    Ok(())
}

/// Convenience for tests and reports: the noisy marginal of a set at every size.
pub fn stored_npms(store: &NpmStore, attrs: &[Attr], max_size: usize) -> Vec<(usize, Table)> {
    let lo = individuals_in_order(attrs).len().max(1);
    (lo..=max_size).filter_map(|s| store.get(attrs, s).map(|t| (s, t))).collect()
}

