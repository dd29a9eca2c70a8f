//! Discrete Markov random fields: junction trees, exact inference, fitting to
//! noisy clique marginals, conditionals and sampling.

use crate::error::{Error, Result};
use crate::rng::categorical;
use crate::table::{cell_count_f64, Factor, Table};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionTree {
    pub cliques: Vec<Vec<usize>>,
    /// `(a, b, separator)` with `a` the parent of `b` when rooted at clique 0.
    pub edges: Vec<(usize, usize, Vec<usize>)>,
    /// Cliques in breadth-first order from the root.
    pub order: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    /// Edge index connecting each clique to its parent.
    pub parent_edge: Vec<Option<usize>>,
    pub cells: f64,
}

impl JunctionTree {
    /// Triangulates the interaction graph of `cliques` (greedy min-fill) and
    /// joins the maximal cliques by a maximum-weight spanning tree.
    pub fn build(domains: &[usize], cliques: &[Vec<usize>], cap: f64) -> Result<JunctionTree> {
        let v = domains.len();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); v];
        for c in cliques {
            for &a in c {
                for &b in c {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        let mut alive = vec![true; v];
        let mut elim_cliques: Vec<Vec<usize>> = Vec::new();
        for _ in 0..v {
            let mut best: Option<(usize, f64, usize)> = None;
            for x in (0..v).filter(|&x| alive[x]) {
                let nb: Vec<usize> = adj[x].iter().copied().filter(|&y| alive[y]).collect();
                let mut fill = 0;
                for (i, &a) in nb.iter().enumerate() {
                    for &b in &nb[i + 1..] {
                        if !adj[a].contains(&b) {
                            fill += 1;
                        }
                    }
                }
                let w = domains[x] as f64 * nb.iter().map(|&y| domains[y] as f64).product::<f64>();
                let better = match best {
                    None => true,
                    Some((f, bw, _)) => fill < f || (fill == f && w < bw),
                };
                if better {
                    best = Some((fill, w, x));
                }
            }
            let (_, _, x) = best.unwrap();
            let nb: Vec<usize> = adj[x].iter().copied().filter(|&y| alive[y]).collect();
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
            let mut c = nb.clone();
            c.push(x);
            c.sort_unstable();
            elim_cliques.push(c);
            alive[x] = false;
        }
        let mut maximal: Vec<Vec<usize>> = Vec::new();
        for c in &elim_cliques {
            let sub = |a: &Vec<usize>, b: &Vec<usize>| a.iter().all(|x| b.contains(x));
            if elim_cliques.iter().any(|d| d.len() > c.len() && sub(c, d)) {
                continue;
            }
            if !maximal.contains(c) {
                maximal.push(c.clone());
            }
        }
        maximal.sort();
        let cells: f64 = maximal.iter().map(|c| c.iter().map(|&x| domains[x] as f64).product::<f64>()).sum();
        if cells > cap {
            return Err(Error::WidthExceeded { cells, cap });
        }
        let m = maximal.len();
        let mut cand: Vec<(usize, usize, usize)> = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let w = maximal[i].iter().filter(|x| maximal[j].contains(x)).count();
                cand.push((w, i, j));
            }
        }
        cand.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut uf: Vec<usize> = (0..m).collect();
        fn find(uf: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while uf[r] != r {
                r = uf[r];
            }
            let mut y = x;
            while uf[y] != r {
                let n = uf[y];
                uf[y] = r;
                y = n;
            }
            r
        }
        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (_, i, j) in cand {
            let (a, b) = (find(&mut uf, i), find(&mut uf, j));
            if a != b {
                uf[a] = b;
                nbrs[i].push(j);
                nbrs[j].push(i);
            }
        }
        let mut parent = vec![None; m];
        let mut parent_edge = vec![None; m];
        let mut order = vec![0];
        let mut seen = vec![false; m];
        seen[0] = true;
        let mut edges = Vec::new();
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let mut ns = nbrs[u].clone();
            ns.sort_unstable();
            for w in ns {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(u);
                    let sep: Vec<usize> = maximal[u].iter().copied().filter(|x| maximal[w].contains(x)).collect();
                    parent_edge[w] = Some(edges.len());
                    edges.push((u, w, sep));
                    order.push(w);
                }
            }
        }
        let jt = JunctionTree { cliques: maximal, edges, order, parent, parent_edge, cells };
        debug_assert!(jt.has_running_intersection());
        Ok(jt)
    }

    /// Every variable's cliques form a connected subtree.
    pub fn has_running_intersection(&self) -> bool {
        let vars: BTreeSet<usize> = self.cliques.iter().flatten().copied().collect();
        for v in vars {
            let holders: Vec<usize> = (0..self.cliques.len()).filter(|&c| self.cliques[c].contains(&v)).collect();
            let roots = holders
                .iter()
                .filter(|&&c| match self.parent[c] {
                    None => true,
                    Some(p) => !self.cliques[p].contains(&v),
                })
                .count();
            if roots != 1 {
                return false;
            }
        }
        true
    }

    pub fn containing(&self, vars: &[usize]) -> Option<usize> {
        (0..self.cliques.len()).find(|&c| vars.iter().all(|v| self.cliques[c].contains(v)))
    }
}

/// Log-linear model p(x) ∝ Π φ_S(x_S), stored with calibrated clique beliefs.
#[derive(Debug, Clone)]
pub struct Mrf {
    pub domains: Vec<usize>,
    /// Clique potentials in the linear domain (φ = exp θ).
    pub potentials: Vec<Factor>,
    pub tree: JunctionTree,
    beliefs: Vec<Factor>,
    seps: Vec<Factor>,
    log_z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MrfDump {
    pub domains: Vec<usize>,
    pub cliques: Vec<Vec<usize>>,
    /// Log-potentials; `null` marks −∞.
    pub theta: Vec<Vec<Option<f64>>>,
    pub junction_tree: Vec<Vec<usize>>,
}

fn with_uncovered(domains: &[usize], potentials: Vec<Factor>) -> Vec<Factor> {
    let mut covered = vec![false; domains.len()];
    for p in &potentials {
        for &v in &p.vars {
            covered[v] = true;
        }
    }
    let mut out = potentials;
    for (v, c) in covered.iter().enumerate() {
        if !c {
            out.push(Factor::constant(vec![v], domains, 1.0));
        }
    }
    out
}

/// Sums out every variable not in `keep` from the product of `factors`.
pub fn eliminate(domains: &[usize], mut factors: Vec<Factor>, keep: &[usize]) -> Factor {
    loop {
        let present: BTreeSet<usize> = factors.iter().flat_map(|f| f.vars.iter().copied()).collect();
        let mut best: Option<(f64, usize)> = None;
        for &v in present.iter().filter(|v| !keep.contains(v)) {
            let mut scope = BTreeSet::new();
            for f in factors.iter().filter(|f| f.vars.contains(&v)) {
                scope.extend(f.vars.iter().copied());
            }
            let w: f64 = scope.iter().map(|&x| domains[x] as f64).product();
            if best.map(|(bw, _)| w < bw).unwrap_or(true) {
                best = Some((w, v));
            }
        }
        let Some((_, v)) = best else { break };
        let (with, without): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&v));
        let mut prod = with[0].clone();
        for f in &with[1..] {
            prod = prod.product(f);
        }
        let rest: Vec<usize> = prod.vars.iter().copied().filter(|&x| x != v).collect();
        factors = without;
        factors.push(prod.marginalize(&rest));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    let mut prod = Factor::constant(keep_sorted.clone(), domains, 1.0);
    for f in &factors {
        prod = prod.product(f);
    }
    prod.marginalize(&keep_sorted)
}

impl Mrf {
    /// Builds and calibrates a model from clique potentials.
    pub fn from_potentials(domains: Vec<usize>, potentials: Vec<Factor>, cap: f64) -> Result<Mrf> {
        let potentials = with_uncovered(&domains, potentials);
        let cliques: Vec<Vec<usize>> = potentials.iter().map(|p| p.vars.clone()).collect();
        let tree = JunctionTree::build(&domains, &cliques, cap)?;
        let mut m = Mrf { domains, potentials, tree, beliefs: Vec::new(), seps: Vec::new(), log_z: 0.0 };
        m.calibrate()?;
        Ok(m)
    }

    pub fn uniform(domains: Vec<usize>) -> Mrf {
        Mrf::from_potentials(domains, Vec::new(), f64::INFINITY).expect("singletons always fit")
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn cliques(&self) -> Vec<Vec<usize>> {
        self.potentials.iter().map(|p| p.vars.clone()).collect()
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// Hugin propagation; leaves every clique belief normalized to 1.
    pub fn calibrate(&mut self) -> Result<()> {
        let t = &self.tree;
        let mut beliefs: Vec<Factor> = t.cliques.iter().map(|c| Factor::constant(c.clone(), &self.domains, 1.0)).collect();
        for p in &self.potentials {
            let c = t.containing(&p.vars).expect("every potential fits a clique");
            beliefs[c].mul_sub(p);
        }
        let mut log_z = 0.0;
        for b in &mut beliefs {
            let m = b.table.data.iter().cloned().fold(0.0, f64::max);
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::Numeric("model has no mass".into()));
            }
            b.table.scale(1.0 / m);
            log_z += m.ln();
        }
        let mut seps: Vec<Factor> = t.edges.iter().map(|(_, _, s)| Factor::constant(s.clone(), &self.domains, 1.0)).collect();
        for &c in t.order.iter().rev() {
            if let (Some(p), Some(e)) = (t.parent[c], t.parent_edge[c]) {
                let mut msg = beliefs[c].marginalize(&t.edges[e].2);
                let s = msg.table.sum();
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Numeric("model has no mass".into()));
                }
                msg.table.scale(1.0 / s);
                beliefs[c].table.scale(1.0 / s);
                log_z += s.ln();
                beliefs[p].mul_sub(&msg);
                seps[e] = msg;
            }
        }
        let root = t.order[0];
        let s = beliefs[root].table.sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Numeric("model has no mass".into()));
        }
        log_z += s.ln();
        beliefs[root].table.scale(1.0 / s);
        for &c in &t.order {
            if let (Some(p), Some(e)) = (t.parent[c], t.parent_edge[c]) {
                let new_sep = beliefs[p].marginalize(&t.edges[e].2);
                let mut upd = new_sep.clone();
                upd.div_sub(&seps[e]);
                beliefs[c].mul_sub(&upd);
                seps[e] = new_sep;
            }
        }
        self.beliefs = beliefs;
        self.seps = seps;
        self.log_z = log_z;
        Ok(())
    }

    /// Propagates a change made to clique `c`'s belief to the rest of the tree.
    fn redistribute_from(&mut self, c: usize) {
        let t = &self.tree;
        let mut stack = vec![(c, usize::MAX)];
        while let Some((u, from)) = stack.pop() {
            for (e, (a, b, sep)) in t.edges.iter().enumerate() {
                let w = if *a == u {
                    *b
                } else if *b == u {
                    *a
                } else {
                    continue;
                };
                if w == from {
                    continue;
                }
                let new_sep = self.beliefs[u].marginalize(sep);
                let mut upd = new_sep.clone();
                upd.div_sub(&self.seps[e]);
                self.beliefs[w].mul_sub(&upd);
                self.seps[e] = new_sep;
                stack.push((w, u));
            }
        }
    }

    /// Normalized marginal over `vars` (returned with sorted variables).
    pub fn marginal(&self, vars: &[usize]) -> Factor {
        if let Some(c) = self.tree.containing(vars) {
            return self.beliefs[c].marginalize(vars);
        }
        let mut f = eliminate(&self.domains, self.potentials.clone(), vars);
        f.normalize();
        f
    }

    /// Marginal over `vars` as a table whose axes follow the given order.
    pub fn marginal_table(&self, vars: &[usize]) -> Table {
        let f = self.marginal(vars);
        let axes: Vec<usize> = vars.iter().map(|v| f.vars.iter().position(|x| x == v).unwrap()).collect();
        f.table.project(&axes)
    }

    /// p(target | evidence); falls back to the target's marginal when the
    /// evidence has zero probability.
    pub fn conditional(&self, target: usize, evidence: &[(usize, usize)]) -> Vec<f64> {
        if evidence.iter().any(|(v, _)| *v == target) {
            let x = evidence.iter().find(|(v, _)| *v == target).unwrap().1;
            let mut out = vec![0.0; self.domains[target]];
            out[x] = 1.0;
            return out;
        }
        let mut fs = self.potentials.clone();
        for f in &mut fs {
            f.restrict(evidence);
        }
        let mut f = eliminate(&self.domains, fs, &[target]);
        if f.normalize() > 0.0 {
            f.table.data
        } else {
            self.marginal(&[target]).table.data
        }
    }

    /// p(target | all other variables), read directly off the cliques holding
    /// the target. `assignment` gives every variable's value (the target's is ignored).
    pub fn conditional_given_all(&self, target: usize, assignment: &[usize]) -> Vec<f64> {
        let d = self.domains[target];
        let mut w = vec![1.0; d];
        for p in self.potentials.iter().filter(|p| p.vars.contains(&target)) {
            let mut idx = vec![0; p.vars.len()];
            let ti = p.vars.iter().position(|&v| v == target).unwrap();
            for (k, &v) in p.vars.iter().enumerate() {
                idx[k] = assignment[v];
            }
            for (x, wx) in w.iter_mut().enumerate() {
                idx[ti] = x;
                *wx *= p.table.get(&idx);
            }
        }
        let s: f64 = w.iter().sum();
        if s > 0.0 && s.is_finite() {
            w.iter().map(|x| x / s).collect()
        } else {
            self.marginal(&[target]).table.data
        }
    }

    /// Draws `n` rows by forward sampling down the junction tree; returns columns.
    pub fn sample<R: RngCore>(&self, n: usize, rng: &mut R) -> Vec<Vec<u32>> {
        let v = self.domains.len();
        let mut cols = vec![vec![0u32; n]; v];
        let mut cache: HashMap<(usize, Vec<usize>), Vec<f64>> = HashMap::new();
        for row in 0..n {
            let mut val = vec![usize::MAX; v];
            for &c in &self.tree.order {
                let b = &self.beliefs[c];
                let fixed: Vec<usize> = b.vars.iter().map(|&x| val[x]).collect();
                let key = (c, fixed.clone());
                let dist = cache.entry(key).or_insert_with(|| {
                    let mut f = b.clone();
                    let ev: Vec<(usize, usize)> =
                        b.vars.iter().zip(&fixed).filter(|(_, x)| **x != usize::MAX).map(|(v, x)| (*v, *x)).collect();
                    f.restrict(&ev);
                    f.table.data
                });
                let cell = match categorical(rng, dist) {
                    Some(i) => i,
                    None => crate::rng::below(rng, dist.len()),
                };
                let mut rem = cell;
                for (k, &x) in b.vars.iter().enumerate().rev() {
                    let d = b.table.shape[k];
                    val[x] = rem % d;
                    rem /= d;
                }
            }
            for x in 0..v {
                cols[x][row] = val[x] as u32;
            }
        }
        cols
    }

    pub fn dump(&self) -> MrfDump {
        MrfDump {
            domains: self.domains.clone(),
            cliques: self.cliques(),
            theta: self
                .potentials
                .iter()
                .map(|p| p.table.data.iter().map(|&x| if x > 0.0 { Some(x.ln()) } else { None }).collect())
                .collect(),
            junction_tree: self.tree.cliques.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    /// Per-clique L1 gap at which fitting stops.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Gap above which an unconverged fit is reported.
    pub warn_gap: f64,
    pub cell_cap: f64,
    /// Rounds of overlap reconciliation applied to the targets before fitting.
    pub consistency_rounds: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { tolerance: 1e-3, max_sweeps: 2000, warn_gap: 1e-2, cell_cap: 1e7, consistency_rounds: 3 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    /// Largest per-clique L1 gap after each sweep.
    pub gaps: Vec<f64>,
    pub converged: bool,
}

/// Smallest potential value relative to its maximum kept during fitting, so
/// products of many potentials stay representable.
pub const POTENTIAL_FLOOR: f64 = 1e-12;

/// Weight of the uniform distribution mixed into every target so that no cell
/// is exactly zero and overlapping targets can never zero out the model.
pub const TARGET_FLOOR: f64 = 1e-6;

/// Clips negatives and normalizes a noisy count table to a distribution.
pub fn to_distribution(t: &Table) -> Table {
    let mut out = t.clone();
    for v in &mut out.data {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
    let s = out.sum();
    let n = out.len() as f64;
    if s > 0.0 {
        out.data.iter_mut().for_each(|v| *v = (1.0 - TARGET_FLOOR) * *v / s + TARGET_FLOOR / n);
    } else {
        out.data.iter_mut().for_each(|v| *v = 1.0 / n);
    }
    out
}

/// Pulls overlapping targets toward agreement on their shared variables,
/// weighting each by the inverse of the cells it aggregates.
pub fn reconcile(domains: &[usize], targets: &mut [Factor], rounds: usize) {
    let mut shared: BTreeSet<Vec<usize>> = BTreeSet::new();
    for i in 0..targets.len() {
        for j in i + 1..targets.len() {
            let u: Vec<usize> = targets[i].vars.iter().copied().filter(|v| targets[j].vars.contains(v)).collect();
            if !u.is_empty() {
                shared.insert(u);
            }
        }
    }
    let mut shared: Vec<Vec<usize>> = shared.into_iter().collect();
    shared.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    for _ in 0..rounds {
        for u in &shared {
            let members: Vec<usize> =
                (0..targets.len()).filter(|&i| u.iter().all(|v| targets[i].vars.contains(v))).collect();
            if members.len() < 2 {
                continue;
            }
            let ucells = cell_count_f64(&u.iter().map(|&v| domains[v]).collect::<Vec<_>>());
            let margs: Vec<Factor> = members.iter().map(|&i| targets[i].marginalize(u)).collect();
            let ratios: Vec<f64> = members.iter().map(|&i| cell_count_f64(&targets[i].table.shape) / ucells).collect();
            let wsum: f64 = ratios.iter().map(|r| 1.0 / r).sum();
            let mut avg = Factor::constant(u.clone(), domains, 0.0);
            for (m, r) in margs.iter().zip(&ratios) {
                for (a, b) in avg.table.data.iter_mut().zip(&m.table.data) {
                    *a += b / r / wsum;
                }
            }
            for ((&i, m), r) in members.iter().zip(&margs).zip(&ratios) {
                let mut diff = avg.clone();
                for (d, x) in diff.table.data.iter_mut().zip(&m.table.data) {
                    *d = (*d - x) / r;
                }
                let axes: Vec<usize> =
                    u.iter().map(|v| targets[i].vars.iter().position(|x| x == v).unwrap()).collect();
                let map = crate::table::projection_map(&targets[i].table.shape, &axes);
                for (val, &k) in targets[i].table.data.iter_mut().zip(&map) {
                    *val += diff.table.data[k];
                }
            }
        }
        for t in targets.iter_mut() {
            t.table = to_distribution(&t.table);
        }
    }
}

/// Fits clique potentials so the model's clique marginals match the targets
/// (noisy counts over sorted variable sets) by iterative proportional fitting.
/// Potentials of cliques present in `warm` are reused as the starting point.
pub fn estimate(
    domains: &[usize],
    targets: &[Factor],
    opts: &EstimateOptions,
    warm: Option<&Mrf>,
) -> Result<(Mrf, EstimateReport)> {
    let mut merged: Vec<(Vec<usize>, Table, usize)> = Vec::new();
    for t in targets {
        let d = to_distribution(&t.table);
        match merged.iter_mut().find(|(v, _, _)| *v == t.vars) {
            Some((_, acc, n)) => {
                for (a, b) in acc.data.iter_mut().zip(&d.data) {
                    *a += b;
                }
                *n += 1;
            }
            None => merged.push((t.vars.clone(), d, 1)),
        }
    }
    let mut goal: Vec<Factor> = merged
        .into_iter()
        .map(|(vars, mut t, n)| {
            t.scale(1.0 / n as f64);
            Factor { vars, table: t }
        })
        .collect();
    reconcile(domains, &mut goal, opts.consistency_rounds);
    let potentials: Vec<Factor> = goal
        .iter()
        .map(|g| {
            warm.and_then(|w| w.potentials.iter().find(|p| p.vars == g.vars).cloned())
                .unwrap_or_else(|| Factor::constant(g.vars.clone(), domains, 1.0))
        })
        .collect();
    let n_goal = goal.len();
    let mut mrf = Mrf::from_potentials(domains.to_vec(), potentials, opts.cell_cap)?;
    let home: Vec<usize> = goal.iter().map(|g| mrf.tree.containing(&g.vars).unwrap()).collect();
    let gap_of = |m: &Mrf| -> f64 {
        goal.iter()
            .zip(&home)
            .map(|(g, &c)| m.beliefs[c].marginalize(&g.vars).table.l1_distance(&g.table))
            .fold(0.0, f64::max)
    };
    let mut gaps = Vec::new();
    let mut gap = gap_of(&mrf);
    let mut best = gap;
    let mut best_at = 0usize;
    let mut sweeps = 0;
    while gap > opts.tolerance && sweeps < opts.max_sweeps {
        for (j, g) in goal.iter().enumerate() {
            let c = home[j];
            let cur = mrf.beliefs[c].marginalize(&g.vars);
            let mut ratio = g.clone();
            for (r, &x) in ratio.table.data.iter_mut().zip(&cur.table.data) {
                *r = if x > 0.0 { *r / x } else { 1.0 };
            }
            mrf.potentials[j].mul_sub(&ratio);
            let m = mrf.potentials[j].table.data.iter().cloned().fold(0.0, f64::max);
            if m > 0.0 && m.is_finite() {
                for v in &mut mrf.potentials[j].table.data {
                    *v = (*v / m).max(POTENTIAL_FLOOR);
                }
            }
            mrf.beliefs[c].mul_sub(&ratio);
            let s = mrf.beliefs[c].table.sum();
            if s > 0.0 {
                mrf.beliefs[c].table.scale(1.0 / s);
            }
            mrf.redistribute_from(c);
        }
        sweeps += 1;
        if sweeps % 50 == 0 {
            mrf.calibrate()?;
        }
        gap = gap_of(&mrf);
        gaps.push(gap);
        if gap < best - 1e-9 {
            best = gap;
            best_at = sweeps;
        } else if sweeps - best_at >= 25 {
            break;
        }
    }
    mrf.calibrate()?;
    let converged = gap <= opts.tolerance;
    if !converged && gap > opts.warn_gap {
        log::debug!("model fit stopped after {sweeps} sweeps with clique gap {gap:.4}");
    }
    debug_assert_eq!(mrf.potentials.len() >= n_goal, true);
    Ok((mrf, EstimateReport { gaps, converged }))
}

/// Per-variable marginals ≥ 0 summing to one are all a model needs to be usable.
pub fn is_normalized(f: &Factor) -> bool {
    (f.table.sum() - 1.0).abs() < 1e-9 && f.table.data.iter().all(|x| *x >= 0.0)
}
