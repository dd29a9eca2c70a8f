//! Group-count queries, relative error, Pearson reports, the random-link
//! baseline and a generator of databases with planted correlations.

use crate::error::{Error, Result};
use crate::flat::FlatRelation;
use crate::relational::{AttributeSpec, Database, FkRef, ForeignKeySpec, Privacy, Relation, RelationSchema, Schema};
use crate::rng::{below, categorical, open_unit, shuffle, Stream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub attr: usize,
    pub values: Vec<u32>,
}

/// Counts groups of exactly `size` members whose referenced row satisfies
/// `household` and that contain distinct members satisfying each of `members`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupQuery {
    pub size: usize,
    pub household: Vec<Clause>,
    pub members: Vec<Vec<Clause>>,
}

/// Attribute domains a query generator draws from.
#[derive(Debug, Clone)]
pub struct QuerySpace {
    pub household_domains: Vec<u32>,
    pub individual_domains: Vec<u32>,
    pub max_size: usize,
}

fn clauses(rng: &mut Stream, domains: &[u32]) -> Vec<usize> {
    let n = domains.len().min(1 + below(rng, 2));
    crate::rng::sample_without_replacement(rng, domains.len(), n)
}

/// Random queries with `c` member predicates; every clause admits
/// ⌊selectivity^(1/k)·|domain|⌋ values (at least one), k being the number of
/// clauses in the query.
pub fn gen_queries(space: &QuerySpace, count: usize, selectivity: f64, c: usize, rng: &mut Stream) -> Result<Vec<GroupQuery>> {
    if !(selectivity > 0.0 && selectivity < 1.0) {
        return Err(Error::Config(format!("selectivity must lie in (0, 1), got {selectivity}")));
    }
    if !(1..=2).contains(&c) {
        return Err(Error::Config(format!("c must be 1 or 2, got {c}")));
    }
    if space.individual_domains.is_empty() || space.max_size == 0 {
        return Err(Error::Config("queries need individual attributes and a positive group size".into()));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let size = 1 + below(rng, space.max_size);
        let h_attrs = if space.household_domains.is_empty() { Vec::new() } else { clauses(rng, &space.household_domains) };
        let m_attrs: Vec<Vec<usize>> = (0..c).map(|_| clauses(rng, &space.individual_domains)).collect();
        let k = h_attrs.len() + m_attrs.iter().map(|m| m.len()).sum::<usize>();
        let width = |d: u32| ((selectivity.powf(1.0 / k as f64) * d as f64).floor() as usize).max(1);
        let mut pick = |attr: usize, d: u32| {
            let mut v: Vec<u32> = crate::rng::sample_without_replacement(rng, d as usize, width(d)).into_iter().map(|x| x as u32).collect();
            v.sort_unstable();
            Clause { attr, values: v }
        };
        let household = h_attrs.iter().map(|&a| pick(a, space.household_domains[a])).collect();
        let members = m_attrs.iter().map(|m| m.iter().map(|&a| pick(a, space.individual_domains[a])).collect()).collect();
        out.push(GroupQuery { size, household, members });
    }
    Ok(out)
}

/// Referenced rows with their members, for one foreign key.
pub struct Grouped<'a> {
    pub households: &'a Relation,
    pub individuals: &'a Relation,
    pub groups: Vec<Vec<usize>>,
}

impl<'a> Grouped<'a> {
    pub fn new(db: &'a Database, fk: FkRef) -> Result<Grouped<'a>> {
        let individuals = &db.relations[fk.relation];
        let households = &db.relations[db.schema.referenced(fk)];
        let groups = individuals.groups(fk.fk, households)?;
        Ok(Grouped { households, individuals, groups })
    }
}

fn satisfies(clauses: &[Clause], value: impl Fn(usize) -> u32) -> bool {
    clauses.iter().all(|c| c.values.binary_search(&value(c.attr)).is_ok())
}

fn members_match(q: &GroupQuery, members: &[usize], value: impl Fn(usize, usize) -> u32, distinct: bool) -> bool {
    let sets: Vec<Vec<usize>> =
        q.members.iter().map(|p| members.iter().copied().filter(|&m| satisfies(p, |a| value(m, a))).collect()).collect();
    match sets.len() {
        0 => true,
        1 => !sets[0].is_empty(),
        _ => {
            let (a, b) = (&sets[0], &sets[1]);
            if a.is_empty() || b.is_empty() {
                return false;
            }
            // Two distinct members exist unless both predicates are met by one and the same member only.
            !distinct || !(a.len() == 1 && b.len() == 1 && a[0] == b[0])
        }
    }
}

pub fn answer_query(g: &Grouped, q: &GroupQuery, distinct: bool) -> u64 {
    let mut n = 0;
    for (h, members) in g.groups.iter().enumerate() {
        if members.len() != q.size || !satisfies(&q.household, |a| g.households.columns[a][h]) {
            continue;
        }
        if members_match(q, members, |m, a| g.individuals.columns[a][m], distinct) {
            n += 1;
        }
    }
    n
}

/// The same count read off a flattened relation.
pub fn answer_query_flat(fr: &FlatRelation, q: &GroupQuery, distinct: bool) -> u64 {
    let mut n = 0;
    for row in 0..fr.len() {
        let s = fr.sizes[row];
        if s != q.size || !satisfies(&q.household, |a| fr.household[a][row]) {
            continue;
        }
        let members: Vec<usize> = (0..s).collect();
        if members_match(q, &members, |m, a| fr.member_value(row, m, a), distinct) {
            n += 1;
        }
    }
    n
}

/// |real − syn| / max(real, 0.01·n).
pub fn rel_error(real: f64, syn: f64, n: f64) -> f64 {
    (real - syn).abs() / real.max(0.01 * n)
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryResult {
    pub query: GroupQuery,
    pub real: u64,
    pub syn: u64,
    pub rel_error: f64,
}

/// Answers every query on both databases; the error floor uses the real
/// number of referenced rows.
pub fn evaluate_queries(real: &Grouped, syn: &Grouped, queries: &[GroupQuery], distinct: bool) -> Vec<QueryResult> {
    let n = real.households.len().max(1) as f64;
    queries
        .par_iter()
        .map(|q| {
            let r = answer_query(real, q, distinct);
            let s = answer_query(syn, q, distinct);
            QueryResult { query: q.clone(), real: r, syn: s, rel_error: rel_error(r as f64, s as f64, n) }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

pub fn summarize(errors: &[f64]) -> ErrorSummary {
    let mut v = errors.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| if v.is_empty() { 0.0 } else { v[((v.len() - 1) as f64 * p).round() as usize] };
    ErrorSummary {
        count: v.len(),
        mean: if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 },
        median: q(0.5),
        p90: q(0.9),
        max: v.last().copied().unwrap_or(0.0),
    }
}

/// Sample Pearson coefficient; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 1e-300 || syy <= 1e-300 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PearsonMode {
    /// Referenced-row attribute against member attribute.
    InterRelational,
    /// Member attribute against another member's attribute in the same group.
    IntraGroup,
}

#[derive(Debug, Clone, Serialize)]
pub struct PearsonEntry {
    pub left: String,
    pub right: String,
    pub mode: PearsonMode,
    pub r: Option<f64>,
    pub pairs: usize,
}

/// Pearson coefficients over bin representatives. Inter-relational pairs are
/// (household attribute, member attribute); intra-group pairs are (member
/// attribute, member attribute) over ordered pairs of distinct members.
pub fn pearson_report(g: &Grouped, pairs: &[(usize, usize)], mode: PearsonMode) -> Vec<PearsonEntry> {
    let ia = &g.individuals.attributes;
    let ha = &g.households.attributes;
    pairs
        .iter()
        .map(|&(a, b)| {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for (h, members) in g.groups.iter().enumerate() {
                match mode {
                    PearsonMode::InterRelational => {
                        for &m in members {
                            x.push(ha[a].representative(g.households.columns[a][h]));
                            y.push(ia[b].representative(g.individuals.columns[b][m]));
                        }
                    }
                    PearsonMode::IntraGroup => {
                        for &m1 in members {
                            for &m2 in members {
                                if m1 != m2 {
                                    x.push(ia[a].representative(g.individuals.columns[a][m1]));
                                    y.push(ia[b].representative(g.individuals.columns[b][m2]));
                                }
                            }
                        }
                    }
                }
            }
            let left = match mode {
                PearsonMode::InterRelational => format!("{}.{}", g.households.name, ha[a].name),
                PearsonMode::IntraGroup => format!("{}.{}", g.individuals.name, ia[a].name),
            };
            PearsonEntry { left, right: format!("{}.{}", g.individuals.name, ia[b].name), mode, r: pearson(&x, &y), pairs: x.len() }
        })
        .collect()
}

/// Group sizes for `n_households` rows whose total equals `n_individuals`,
/// following the shape of `hist` (counts per size, index 0 = empty groups).
pub fn sizes_from_histogram(hist: &[f64], n_households: usize, n_individuals: usize, rng: &mut Stream) -> Vec<usize> {
    let members: f64 = hist.iter().enumerate().map(|(s, c)| s as f64 * c.max(0.0)).sum();
    let f = if members > 0.0 { n_individuals as f64 / members } else { 0.0 };
    if (f - 1.0).abs() > 1e-12 {
        log::info!("group-size histogram covers {members} members, {n_individuals} given; rescaling");
    }
    let exact: Vec<f64> = hist.iter().map(|c| c.max(0.0) * f).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    counts[0] = 0;
    let mut left = n_individuals - counts.iter().enumerate().map(|(s, c)| s * c).sum::<usize>().min(n_individuals);
    let mut rem: Vec<(f64, usize)> = exact.iter().enumerate().skip(1).map(|(s, x)| (x - x.floor(), s)).collect();
    rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, s) in &rem {
        if s <= left {
            counts[s] += 1;
            left -= s;
        }
    }
    if counts.len() < 2 {
        counts.resize(2, 0);
    }
    counts[1] += left;
    let mut sizes: Vec<usize> = Vec::new();
    for (s, &c) in counts.iter().enumerate().skip(1) {
        sizes.extend(std::iter::repeat(s).take(c));
    }
    if sizes.len() > n_households {
        log::warn!("{} groups do not fit into {n_households} rows; dropping the excess", sizes.len());
        shuffle(rng, &mut sizes);
        sizes.truncate(n_households);
    }
    sizes.resize(n_households, 0);
    shuffle(rng, &mut sizes);
    sizes
}

/// Links independently synthesized members to referenced rows uniformly at
/// random, respecting a group-size histogram.
pub fn random_link_baseline(
    individuals: &Relation,
    fk: usize,
    households: &Relation,
    hist: &[f64],
    rng: &mut Stream,
) -> Relation {
    let sizes = sizes_from_histogram(hist, households.len(), individuals.len(), rng);
    let mut order: Vec<usize> = (0..individuals.len()).collect();
    shuffle(rng, &mut order);
    let mut rows = Vec::new();
    let mut keys = Vec::new();
    let mut next = 0;
    for (h, &s) in sizes.iter().enumerate() {
        for _ in 0..s {
            if next < order.len() {
                rows.push(order[next]);
                keys.push(households.keys[h].clone());
                next += 1;
            }
        }
    }
    let mut out = individuals.select_rows(&rows);
    out.fks[fk] = keys;
    out
}

/// Shape of a planted-correlation database.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n_households: usize,
    pub size_probs: Vec<f64>,
    pub domain: u32,
    pub n_household_attrs: usize,
    pub n_individual_attrs: usize,
    /// Correlation of one attribute between two members of the same group.
    pub intra: f64,
    /// Correlation of household attribute j with member attribute j.
    pub inter: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_households: 2000,
            size_probs: vec![0.3, 0.3, 0.25, 0.15],
            domain: 5,
            n_household_attrs: 2,
            n_individual_attrs: 4,
            intra: 0.6,
            inter: 0.5,
        }
    }
}

/// Every member attribute copies a per-group latent value with probability
/// p = √intra, otherwise draws uniformly; household attribute j copies the
/// latent of member attribute j with probability inter/p. Two members then
/// correlate at p² and a household attribute with a member at inter.
pub fn gen_planted_db(spec: &PlantedSpec, rng: &mut Stream) -> Result<Database> {
    let p = spec.intra.max(0.0).sqrt();
    let q = if p > 0.0 { spec.inter / p } else { 0.0 };
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("intra {} and inter {} cannot be planted", spec.intra, spec.inter)));
    }
    if spec.n_household_attrs > spec.n_individual_attrs {
        return Err(Error::Config("each household attribute needs a member attribute to correlate with".into()));
    }
    let d = spec.domain;
    let reps: Vec<f64> = (0..d).map(|x| x as f64).collect();
    let attr = |name: String| AttributeSpec { name, domain_size: d, bin_representatives: Some(reps.clone()) };
    let max_size = spec.size_probs.len();
    let schema = Schema {
        relations: vec![
            RelationSchema {
                name: "household".into(),
                primary_key: "hid".into(),
                attributes: (0..spec.n_household_attrs).map(|j| attr(format!("H{j}"))).collect(),
                foreign_keys: Vec::new(),
                privacy: Privacy::Primary,
                max_group_size: None,
            },
            RelationSchema {
                name: "individual".into(),
                primary_key: "pid".into(),
                attributes: (0..spec.n_individual_attrs).map(|j| attr(format!("X{j}"))).collect(),
                foreign_keys: vec![ForeignKeySpec {
                    attribute: "hid".into(),
                    references: "household".into(),
                    max_group_size: Some(max_size),
                    min_group_size: None,
                    tau: Some(1.0),
                }],
                privacy: Privacy::Secondary,
                max_group_size: None,
            },
        ],
    };
    schema.validate()?;
    let mut hh = Relation::empty(&schema.relations[0]);
    let mut ind = Relation::empty(&schema.relations[1]);
    let draw = |rng: &mut Stream, prob: f64, latent: u32| if open_unit(rng) < prob { latent } else { below(rng, d as usize) as u32 };
    for h in 0..spec.n_households {
        let s = 1 + categorical(rng, &spec.size_probs).expect("positive size probabilities");
        let latent: Vec<u32> = (0..spec.n_individual_attrs).map(|_| below(rng, d as usize) as u32).collect();
        let key = (h + 1).to_string();
        hh.keys.push(key.clone());
        for j in 0..spec.n_household_attrs {
            let v = draw(rng, q, latent[j]);
            hh.columns[j].push(v);
        }
        for _ in 0..s {
            ind.keys.push((ind.keys.len() + 1).to_string());
            ind.fks[0].push(key.clone());
            for (j, &l) in latent.iter().enumerate() {
                let v = draw(rng, p, l);
                ind.columns[j].push(v);
            }
        }
    }
    let db = Database { schema, relations: vec![hh, ind] };
    db.validate()?;
    Ok(db)
}
