//! Normalized permutation marginals (NPMs): counting, letter canonicalization,
//! roll-ups, the marginal store and R-scores.

use crate::error::{Error, Result};
use crate::flat::{individuals_in_order, Attr, FlatRelation, FlatSchema, Owner};
use crate::table::{cell_count, cell_count_f64, Table};
use serde::Serialize;
use std::collections::BTreeMap;

/// n! / (n-k)!
pub fn falling(n: usize, k: usize) -> u128 {
    assert!(k <= n);
    ((n - k + 1)..=n).fold(1u128, |acc, x| acc * x as u128)
}

/// Number of permutation-relation tuples generated by one household of size `s`.
pub fn permutation_weight(s: usize, o: usize) -> u128 {
    falling(s, s.min(o))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Npm {
    pub attrs: Vec<Attr>,
    pub size: usize,
    pub table: Table,
}

fn check_set(attrs: &[Attr]) -> Result<()> {
    for (i, a) in attrs.iter().enumerate() {
        if attrs[..i].contains(a) {
            return Err(Error::Domain(format!("attribute {a:?} repeated")));
        }
    }
    Ok(())
}

/// Calls `f` with every ordered tuple of `d` distinct indices from `0..s`.
pub fn for_each_injection(s: usize, d: usize, mut f: impl FnMut(&[usize])) {
    fn rec(s: usize, d: usize, cur: &mut Vec<usize>, used: &mut [bool], f: &mut dyn FnMut(&[usize])) {
        if cur.len() == d {
            f(cur);
            return;
        }
        for m in 0..s {
            if !used[m] {
                used[m] = true;
                cur.push(m);
                rec(s, d, cur, used, f);
                cur.pop();
                used[m] = false;
            }
        }
    }
    if d > s {
        return;
    }
    let mut used = vec![false; s];
    rec(s, d, &mut Vec::with_capacity(d), &mut used, &mut f);
}

/// Counts the NPM of a permutation-relation attribute set (letters as owners)
/// for households of size `s` under order `o`.
///
/// Every ordered tuple of `D` distinct members extends to `(s-D)!/(s-o')!`
/// permutation tuples, so counts are accumulated over `D`-tuples and scaled once.
pub fn count_npm(fr: &FlatRelation, attrs: &[Attr], s: usize, o: usize) -> Result<Npm> {
    check_set(attrs)?;
    let letters = individuals_in_order(attrs);
    let d = letters.len();
    if let Some(&l) = letters.iter().find(|&&l| l as usize >= o) {
        return Err(Error::Domain(format!("letter index {l} not below order {o}")));
    }
    let op = s.min(o);
    if d > op {
        return Err(Error::Domain(format!("{d} letters exceed min(s={s}, o={o})")));
    }
    if s > fr.schema.max_size {
        return Err(Error::Domain(format!("size {s} exceeds maximum group size {}", fr.schema.max_size)));
    }
    let shape = fr.schema.shape(attrs);
    let mut counts = vec![0u64; cell_count(&shape)];
    let strides = crate::table::strides(&shape);
    let pos: Vec<Option<usize>> = attrs
        .iter()
        .map(|a| match a.owner {
            Owner::Household => None,
            Owner::Individual(l) => letters.iter().position(|x| *x == l),
        })
        .collect();
    for row in 0..fr.len() {
        if fr.sizes[row] != s {
            continue;
        }
        let mut base = 0usize;
        for (k, a) in attrs.iter().enumerate() {
            if a.is_household() {
                base += fr.household[a.base as usize][row] as usize * strides[k];
            }
        }
        for_each_injection(s, d, |tuple| {
            let mut idx = base;
            for (k, a) in attrs.iter().enumerate() {
                if let Some(p) = pos[k] {
                    idx += fr.member_value(row, tuple[p], a.base as usize) as usize * strides[k];
                }
            }
            counts[idx] += 1;
        });
    }
    let mult = falling(s - d, op - d);
    let w = permutation_weight(s, o) as f64;
    let data = counts.iter().map(|&c| (c as u128 * mult) as f64 / w).collect();
    Ok(Npm { attrs: attrs.to_vec(), size: s, table: Table { shape, data } })
}

/// Canonical form of an attribute set under renaming of letters: the
/// lexicographically smallest sorted renaming, with letters compacted to `0..D`.
/// Also returns, for each input attribute, its position in the canonical list.
pub fn canonicalize(attrs: &[Attr]) -> (Vec<Attr>, Vec<usize>) {
    let letters = individuals_in_order(attrs);
    let d = letters.len();
    let mut best: Option<(Vec<Attr>, Vec<Attr>)> = None;
    let mut perm: Vec<usize> = (0..d).collect();
    loop {
        let renamed: Vec<Attr> = attrs
            .iter()
            .map(|a| match a.owner {
                Owner::Household => *a,
                Owner::Individual(l) => {
                    let i = letters.iter().position(|x| *x == l).unwrap();
                    Attr { owner: Owner::Individual(perm[i] as u8), base: a.base }
                }
            })
            .collect();
        let mut sorted = renamed.clone();
        sorted.sort();
        if best.as_ref().map(|(b, _)| sorted < *b).unwrap_or(true) {
            best = Some((sorted, renamed));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (sorted, renamed) = best.unwrap();
    let pos = renamed.iter().map(|a| sorted.iter().position(|b| b == a).unwrap()).collect();
    (sorted, pos)
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Maps flattened-relation slots to letters in first-use order.
pub fn slots_to_letters(attrs: &[Attr]) -> Vec<Attr> {
    let slots = individuals_in_order(attrs);
    attrs
        .iter()
        .map(|a| match a.owner {
            Owner::Household => *a,
            Owner::Individual(s) => Attr {
                owner: Owner::Individual(slots.iter().position(|x| *x == s).unwrap() as u8),
                base: a.base,
            },
        })
        .collect()
}

/// Sums out every attribute not in `keep` and canonicalizes the result.
pub fn rollup(npm: &Npm, keep: &[Attr]) -> Result<Npm> {
    let mut axes = Vec::with_capacity(keep.len());
    for k in keep {
        match npm.attrs.iter().position(|a| a == k) {
            Some(p) => axes.push(p),
            None => return Err(Error::Subset(format!("{k:?} is not in the marginal"))),
        }
    }
    let (canon, pos) = canonicalize(keep);
    let mut order = vec![0; keep.len()];
    for (i, &p) in pos.iter().enumerate() {
        order[p] = axes[i];
    }
    Ok(Npm { attrs: canon, size: npm.size, table: npm.table.project(&order) })
}

#[derive(Debug, Clone, Serialize)]
pub struct StoredNpm {
    pub table: Table,
    /// Variance of the noise in each cell.
    pub noise_var: f64,
}

/// Noisy NPMs keyed by canonical attribute set and group size.
#[derive(Debug, Clone, Default)]
pub struct NpmStore {
    entries: BTreeMap<(Vec<Attr>, usize), StoredNpm>,
}

impl NpmStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Vec<Attr>, usize), &StoredNpm)> {
        self.entries.iter()
    }

    /// Inserts a table for a canonical set unless a lower-variance one is stored.
    pub fn insert(&mut self, canon: Vec<Attr>, s: usize, table: Table, noise_var: f64) {
        let key = (canon, s);
        match self.entries.get(&key) {
            Some(old) if old.noise_var <= noise_var => {}
            _ => {
                self.entries.insert(key, StoredNpm { table, noise_var });
            }
        }
    }

    /// Inserts a set (any letters, any order) together with all its non-empty roll-ups.
    pub fn insert_with_rollups(&mut self, npm: &Npm, noise_var: f64) {
        let n = npm.attrs.len();
        let full = cell_count_f64(&npm.table.shape);
        for mask in 1u32..(1 << n) {
            let keep: Vec<Attr> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| npm.attrs[i]).collect();
            let r = rollup(npm, &keep).expect("subset by construction");
            let factor = full / cell_count_f64(&r.table.shape);
            self.insert(r.attrs, npm.size, r.table, noise_var * factor);
        }
    }

    pub fn contains(&self, attrs: &[Attr], s: usize) -> bool {
        let (canon, _) = canonicalize(attrs);
        self.entries.contains_key(&(canon, s))
    }

    /// The stored table for a permutation-relation set, axes in the requested order.
    pub fn get(&self, attrs: &[Attr], s: usize) -> Option<Table> {
        let (canon, pos) = canonicalize(attrs);
        self.entries.get(&(canon, s)).map(|e| e.table.project(&pos))
    }

    pub fn noise_var(&self, attrs: &[Attr], s: usize) -> Option<f64> {
        let (canon, _) = canonicalize(attrs);
        self.entries.get(&(canon, s)).map(|e| e.noise_var)
    }

    /// The stored table for a flattened-relation set at size `s`.
    pub fn instantiate(&self, schema: &FlatSchema, fr_attrs: &[Attr], s: usize, o: usize) -> Result<Table> {
        let slots = individuals_in_order(fr_attrs);
        if let Some(&bad) = slots.iter().find(|&&x| x as usize >= s) {
            return Err(Error::Domain(format!("slot {} does not exist for group size {s}", bad + 1)));
        }
        if slots.len() > o {
            return Err(Error::Domain(format!("{} slots exceed order {o}", slots.len())));
        }
        let pr = slots_to_letters(fr_attrs);
        self.get(&pr, s).ok_or_else(|| {
            let names: Vec<String> = fr_attrs.iter().map(|a| schema.fr_name(*a)).collect();
            Error::MissingNpm(format!("{{{}}} at size {s}", names.join(", ")))
        })
    }

    /// Writes one CSV row per cell: size, attribute codes, value.
    pub fn dump_csv(&self, schema: &FlatSchema, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "attributes,size,cell,value")?;
        for ((attrs, s), e) in &self.entries {
            let name = schema.pr_set_name(attrs).replace(',', ";");
            for (f, v) in e.table.data.iter().enumerate() {
                let cell: Vec<String> = e.table.unflatten(f).iter().map(|x| x.to_string()).collect();
                writeln!(w, "\"{name}\",{s},{},{v}", cell.join(" "))?;
            }
        }
        Ok(())
    }
}

/// `½‖joint − (1/n)·m1⊗m2‖₁` for one size class.
pub fn r_score_term(joint: &Table, m1: &Table, m2: &Table, n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    let mut prod = m1.outer(m2);
    prod.scale(1.0 / n);
    0.5 * joint.l1_distance(&prod)
}

/// R-score of two permutation-relation attributes summed over group sizes.
pub fn r_score(fr: &FlatRelation, a1: Attr, a2: Attr, o: usize) -> Result<f64> {
    let d = individuals_in_order(&[a1, a2]).len();
    let counts = fr.size_counts();
    let mut total = 0.0;
    for s in 1..=fr.schema.max_size {
        if s < d || s.min(o) < d || counts[s] == 0 {
            continue;
        }
        let joint = count_npm(fr, &[a1, a2], s, o)?;
        let m1 = count_npm(fr, &[a1], s, o)?;
        let m2 = count_npm(fr, &[a2], s, o)?;
        total += r_score_term(&joint.table, &m1.table, &m2.table, counts[s] as f64);
    }
    Ok(total)
}

/// The pairs whose R-scores determine all others by letter renaming:
/// household–household, household–individual, same-letter and cross-letter pairs.
pub fn basic_pairs(schema: &FlatSchema, o: usize) -> Vec<(Attr, Attr)> {
    let h = schema.household_without_size();
    let ni = schema.n_individual();
    let mut out = Vec::new();
    for (i, &x) in h.iter().enumerate() {
        for &y in &h[i + 1..] {
            out.push((Attr::household(x), Attr::household(y)));
        }
    }
    for &x in &h {
        for y in 0..ni {
            out.push((Attr::household(x), Attr::individual(0, y)));
        }
    }
    for x in 0..ni {
        for y in x + 1..ni {
            out.push((Attr::individual(0, x), Attr::individual(0, y)));
        }
    }
    if o >= 2 && schema.max_size >= 2 {
        for x in 0..ni {
            for y in x..ni {
                out.push((Attr::individual(0, x), Attr::individual(1, y)));
            }
        }
    }
    out
}

/// Noisy R-scores keyed by canonical pair.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RScores {
    pub scores: BTreeMap<String, f64>,
    #[serde(skip)]
    map: BTreeMap<Vec<Attr>, f64>,
}

impl RScores {
    pub fn insert(&mut self, schema: &FlatSchema, a: Attr, b: Attr, v: f64) {
        let (canon, _) = canonicalize(&[a, b]);
        self.scores.insert(schema.pr_set_name(&canon), v);
        self.map.insert(canon, v);
    }

    /// Score of any two attributes (slots or letters); pairs involving the
    /// group size, or never measured, score zero.
    pub fn get(&self, schema: &FlatSchema, a: Attr, b: Attr) -> f64 {
        if a == b {
            return 0.0;
        }
        let is_size = |x: &Attr| x.is_household() && x.base as usize == schema.size_attr;
        if is_size(&a) || is_size(&b) {
            return 0.0;
        }
        let (canon, _) = canonicalize(&slots_to_letters(&[a, b]));
        self.map.get(&canon).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Number of basic R-score pairs: ½(H² + 2HI + 2I² − H).
pub fn basic_pair_count(h: usize, i: usize) -> usize {
    (h * h + 2 * h * i + 2 * i * i - h) / 2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights() {
        assert_eq!(permutation_weight(4, 2), 12);
        assert_eq!(permutation_weight(2, 3), 2);
        assert_eq!(permutation_weight(3, 3), 6);
        assert_eq!(permutation_weight(1, 3), 1);
    }

    #[test]
    fn canonical_ignores_letter_names() {
        let a = [Attr::individual(2, 1), Attr::individual(0, 0)];
        let b = [Attr::individual(0, 1), Attr::individual(1, 0)];
        assert_eq!(canonicalize(&a).0, canonicalize(&b).0);
        let (c, _) = canonicalize(&a);
        assert_eq!(c, vec![Attr::individual(0, 0), Attr::individual(1, 1)]);
    }

    #[test]
    fn basic_pair_count_matches_enumeration() {
        assert_eq!(basic_pair_count(2, 2), 9);
        for h in 0..4 {
            for i in 0..4 {
                let hs: Vec<_> = (0..=h).map(|k| crate::relational::AttributeSpec::new(format!("h{k}"), 2)).collect();
                let is: Vec<_> = (0..i).map(|k| crate::relational::AttributeSpec::new(format!("i{k}"), 2)).collect();
                let schema = FlatSchema { household_attrs: hs, size_attr: h, individual_attrs: is, max_size: 3 };
                assert_eq!(basic_pairs(&schema, 3).len(), basic_pair_count(h, i), "h={h} i={i}");
            }
        }
    }
}
