//! Whole-database synthesis: relations in dependency order, one stage per
//! relation without foreign keys and one per foreign key of a private relation.

use crate::error::{Error, Result};
use crate::flat::{flatten, FlatSchema};
use crate::marginals::NpmStore;
use crate::mrf::MrfDump;
use crate::privacy::{plan_budget, BudgetPlan, Ledger, PlanParams, StageKind, StageSpec};
use crate::relational::{augment_size_attribute, size_attribute_name, Database, FkRef, Relation};
use crate::rng::SeedTree;
use crate::synthesis::fk::{synthesize_fk, FkInput, FkReport, Pool};
use crate::synthesis::single::{synthesize_single, NoisyMarginal, SingleInput};
use crate::synthesis::SynthesisConfig;
use crate::table::cell_count_f64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

/// Everything that determines a run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    #[serde(default)]
    pub config: SynthesisConfig,
    /// τ per foreign key label; overrides the schema.
    #[serde(default)]
    pub tau: BTreeMap<String, f64>,
    /// Stage weights by stage name; missing stages use their attribute count.
    #[serde(default)]
    pub stage_weights: BTreeMap<String, f64>,
}

impl RunSettings {
    pub fn new(epsilon: f64, delta: f64, seed: u64) -> Self {
        RunSettings { epsilon, delta, seed, config: SynthesisConfig::default(), tau: BTreeMap::new(), stage_weights: BTreeMap::new() }
    }
}

/// Model of one target attribute at one group size, for dumps.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDump {
    pub stage: String,
    pub target: String,
    pub size: usize,
    pub model: MrfDump,
}

pub struct StageStore {
    pub stage: String,
    pub schema: FlatSchema,
    pub store: NpmStore,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
    pub cost: f64,
}

pub struct SynthesisResult {
    pub database: Database,
    pub plan: BudgetPlan,
    pub ledger: Ledger,
    pub fk_reports: Vec<FkReport>,
    pub stores: Vec<StageStore>,
    pub models: Vec<ModelDump>,
    pub timings: Vec<StageTiming>,
}

/// τ of a foreign key: from the settings, else from the schema.
pub fn tau_for(db: &Database, settings: &RunSettings, fk: FkRef) -> Result<f64> {
    let label = db.schema.fk_label(fk);
    let t = settings
        .tau
        .get(&label)
        .copied()
        .or(db.schema.relations[fk.relation].foreign_keys[fk.fk].tau)
        .ok_or_else(|| Error::Config(format!("no tau given for foreign key {label}")))?;
    if !(t >= 1.0) || t.fract() != 0.0 {
        return Err(Error::Config(format!("tau for {label} must be a positive integer, got {t}")));
    }
    Ok(t)
}

/// The real relations with one group-size attribute per incoming private
/// foreign key appended, and the cap and attribute index of each such key.
pub struct Augmented {
    pub relations: Vec<Relation>,
    pub size_attr: BTreeMap<FkRef, (usize, usize)>,
}

pub fn augment(db: &Database) -> Result<Augmented> {
    let mut relations = db.relations.clone();
    let mut size_attr = BTreeMap::new();
    for (r, rel) in relations.iter_mut().enumerate() {
        for f in db.schema.incoming_private(r) {
            let cap = db.group_cap(f)?;
            let aug = augment_size_attribute(rel, &db.relations[f.relation], f.fk, cap)?;
            size_attr.insert(f, (aug.attributes.len() - 1, cap));
            *rel = aug;
        }
    }
    Ok(Augmented { relations, size_attr })
}

fn private_order(db: &Database) -> Result<Vec<usize>> {
    Ok(db.schema.topological_order()?.into_iter().filter(|&r| db.schema.relations[r].privacy.is_private()).collect())
}

/// One planning entry per stage, in execution order.
pub fn stage_specs(db: &Database, aug: &Augmented, settings: &RunSettings) -> Result<Vec<StageSpec>> {
    let mut out = Vec::new();
    for r in private_order(db)? {
        let rs = &db.schema.relations[r];
        let n_attrs = aug.relations[r].attributes.len();
        if rs.foreign_keys.is_empty() {
            out.push(StageSpec {
                name: rs.name.clone(),
                kind: StageKind::Single,
                weight: settings.stage_weights.get(&rs.name).copied().unwrap_or(n_attrs.max(1) as f64),
                tau: 1.0,
                n_household: 0,
                n_individual: n_attrs,
                max_size: 0,
                household_public: false,
            });
            continue;
        }
        let m = rs.foreign_keys.len();
        for j in 0..m {
            let f = FkRef { relation: r, fk: j };
            let name = rs.fk_label(j);
            let h = db.schema.referenced(f);
            let (_, cap) = aug.size_attr[&f];
            out.push(StageSpec {
                name: name.clone(),
                kind: StageKind::ForeignKey,
                weight: settings.stage_weights.get(&name).copied().unwrap_or(n_attrs.max(1) as f64 / m as f64),
                tau: tau_for(db, settings, f)?,
                n_household: db.schema.relations[h].attributes.len(),
                n_individual: n_attrs,
                max_size: cap,
                household_public: !db.schema.relations[h].privacy.is_private(),
            });
        }
    }
    if let Some(k) = settings.stage_weights.keys().find(|k| !out.iter().any(|s| &s.name == *k)) {
        return Err(Error::Config(format!("stage weight given for unknown stage {k}")));
    }
    Ok(out)
}

/// The referenced relation restricted to its schema attributes plus the group
/// size of one foreign key (last).
fn household_view(rel: &Relation, n_schema: usize, size_attr: usize) -> Relation {
    let mut out = rel.clone();
    let mut attrs = rel.attributes[..n_schema].to_vec();
    attrs.push(rel.attributes[size_attr].clone());
    let mut cols = rel.columns[..n_schema].to_vec();
    cols.push(rel.columns[size_attr].clone());
    out.attributes = attrs;
    out.columns = cols;
    out
}

/// Re-indexes marginals of an augmented relation into a household view,
/// summing out attributes the view lacks.
fn view_marginals(ms: &[NoisyMarginal], n_schema: usize, size_attr: usize) -> Vec<NoisyMarginal> {
    ms.iter()
        .filter_map(|m| {
            let keep: Vec<usize> = (0..m.attrs.len()).filter(|&i| m.attrs[i] < n_schema || m.attrs[i] == size_attr).collect();
            if keep.is_empty() {
                return None;
            }
            let attrs: Vec<usize> = keep.iter().map(|&i| if m.attrs[i] == size_attr { n_schema } else { m.attrs[i] }).collect();
            let table = m.table.project(&keep);
            let dropped = cell_count_f64(&m.table.shape) / cell_count_f64(&table.shape);
            Some(NoisyMarginal { attrs, table, noise_var: m.noise_var * dropped })
        })
        .collect()
}

/// Synthesizes every private relation and copies public ones.
pub fn synthesize_database(db: &Database, settings: &RunSettings) -> Result<SynthesisResult> {
    db.schema.validate()?;
    db.validate()?;
    settings.config.validate()?;
    let cfg = &settings.config;
    let aug = augment(db)?;
    let specs = stage_specs(db, &aug, settings)?;
    let params = PlanParams { order: cfg.order, k: cfg.k, t2: cfg.t2 };
    let plan = plan_budget(settings.epsilon, settings.delta, &specs, &params)?;
    let mut ledger = Ledger::new(plan.budget);
    let seeds = SeedTree::new(settings.seed);

    let mut synthetic: Vec<Option<Relation>> = vec![None; db.relations.len()];
    let mut marginals: Vec<Vec<NoisyMarginal>> = vec![Vec::new(); db.relations.len()];
    let mut fk_reports = Vec::new();
    let mut stores = Vec::new();
    let mut models = Vec::new();
    let mut timings = Vec::new();

    for r in private_order(db)? {
        let rs = &db.schema.relations[r];
        let real = &aug.relations[r];
        if rs.foreign_keys.is_empty() {
            let stage = plan.stage(&rs.name).expect("planned");
            let t0 = Instant::now();
            let before = ledger.spent();
            let required: Vec<usize> = (rs.attributes.len()..real.attributes.len()).collect();
            let out = synthesize_single(
                &SingleInput {
                    label: rs.name.clone(),
                    attrs: &real.attributes,
                    columns: &real.columns,
                    weights: None,
                    required,
                    tau: stage.tau,
                    budget: stage.share,
                    known_total: None,
                    sample: true,
                },
                cfg,
                &mut ledger,
                &seeds.child(&rs.name),
            )?;
            let columns = out.columns.expect("sampled");
            let n = columns.first().map(|c| c.len()).unwrap_or(out.total as usize);
            let mut rel = Relation::empty(rs);
            rel.attributes = real.attributes.clone();
            rel.keys = (1..=n).map(|i| i.to_string()).collect();
            rel.columns = columns;
            synthetic[r] = Some(rel);
            marginals[r] = out.marginals;
            timings.push(StageTiming { stage: rs.name.clone(), seconds: t0.elapsed().as_secs_f64(), cost: ledger.spent() - before });
            log::info!("{}: synthesized {n} rows, ledger {:.6}/{:.6}", rs.name, ledger.spent(), ledger.budget);
            continue;
        }

        // Rows of the current version and their foreign key values so far.
        let mut cur_cols: Vec<Vec<u32>> = Vec::new();
        let mut cur_fks: Vec<Vec<String>> = Vec::new();
        for j in 0..rs.foreign_keys.len() {
            let f = FkRef { relation: r, fk: j };
            let label = rs.fk_label(j);
            let stage = plan.stage(&label).expect("planned");
            let fk_plan = stage.fk.as_ref().expect("foreign key stage");
            let t0 = Instant::now();
            let before = ledger.spent();
            let h = db.schema.referenced(f);
            let hs = &db.schema.relations[h];
            let (size_attr, cap) = aug.size_attr[&f];
            let n_schema = hs.attributes.len();
            let real_h = household_view(&aug.relations[h], n_schema, size_attr);
            let real_fr = flatten(real, j, &real_h, n_schema, cap)?;
            let syn_h = synthetic[h].as_ref().map(|s| household_view(s, n_schema, size_attr));
            let h_marginals = view_marginals(&marginals[h], n_schema, size_attr);
            let public = !hs.privacy.is_private();
            if !public && syn_h.is_none() {
                return Err(Error::Config(format!("{} has no synthetic version before {label}", hs.name)));
            }
            let pool = (j > 0).then(|| Pool { columns: &cur_cols });
            let out = synthesize_fk(
                FkInput {
                    label: label.clone(),
                    real: &real_fr,
                    households: &real_h,
                    households_public: public,
                    household_schema_attrs: n_schema,
                    synthetic_households: syn_h.as_ref(),
                    household_marginals: &h_marginals,
                    plan: fk_plan,
                    tau: stage.tau,
                    pool,
                },
                cfg,
                &mut ledger,
                &seeds.child(&label),
            )?;
            let h_keys: &Vec<String> = match &synthetic[h] {
                Some(s) => &s.keys,
                None => &db.relations[h].keys,
            };
            let ni = real.attributes.len();
            let mut cols = vec![Vec::new(); ni];
            let mut fks: Vec<Vec<String>> = vec![Vec::new(); j + 1];
            for row in 0..out.flat.len() {
                for slot in 0..out.flat.sizes[row] {
                    for (b, c) in cols.iter_mut().enumerate() {
                        c.push(out.flat.member_value(row, slot, b));
                    }
                    if let Some(pr) = &out.pool_rows {
                        let p = pr[row][slot];
                        for (k, col) in fks.iter_mut().enumerate().take(j) {
                            col.push(cur_fks[k][p].clone());
                        }
                    }
                    fks[j].push(h_keys[row].clone());
                }
            }
            cur_cols = cols;
            cur_fks = fks;
            for (ti, t) in out.models.iter().enumerate() {
                for (&s, m) in &t.models {
                    models.push(ModelDump {
                        stage: label.clone(),
                        target: out.report.targets[ti].target.clone(),
                        size: s,
                        model: m.dump(),
                    });
                }
            }
            stores.push(StageStore { stage: label.clone(), schema: real_fr.schema.clone(), store: out.store });
            fk_reports.push(out.report);
            timings.push(StageTiming { stage: label.clone(), seconds: t0.elapsed().as_secs_f64(), cost: ledger.spent() - before });
            log::info!("{label}: synthesized {} rows, ledger {:.6}/{:.6}", cur_cols.first().map(|c| c.len()).unwrap_or(0), ledger.spent(), ledger.budget);
        }
        let n = cur_fks.last().map(|c| c.len()).unwrap_or(0);
        let mut rel = Relation::empty(rs);
        rel.attributes = real.attributes.clone();
        rel.keys = (1..=n).map(|i| i.to_string()).collect();
        rel.columns = cur_cols;
        rel.fks = cur_fks;
        synthetic[r] = Some(rel);
    }

    let relations: Vec<Relation> = db
        .schema
        .relations
        .iter()
        .enumerate()
        .map(|(i, rs)| match synthetic[i].take() {
            Some(mut rel) => {
                rel.truncate_attributes(rs.attributes.len());
                rel
            }
            None => db.relations[i].clone(),
        })
        .collect();
    let database = Database { schema: db.schema.clone(), relations };
    database.check_integrity()?;
    Ok(SynthesisResult { database, plan, ledger, fk_reports, stores, models, timings })
}

/// Names of the derived group-size attributes, by foreign key label.
pub fn size_attribute_names(db: &Database) -> Vec<String> {
    db.schema.private_fks().into_iter().map(|f| size_attribute_name(&db.schema.fk_label(f))).collect()
}

/// δ = 1 / (rows of the largest private secondary relation), falling back to
/// the largest private relation.
pub fn auto_delta(db: &Database) -> Result<f64> {
    let rows = |pred: &dyn Fn(crate::relational::Privacy) -> bool| {
        db.schema.relations.iter().zip(&db.relations).filter(|(s, _)| pred(s.privacy)).map(|(_, r)| r.len()).max()
    };
    let n = rows(&|p| p == crate::relational::Privacy::Secondary)
        .or_else(|| rows(&|p| p.is_private()))
        .unwrap_or(0);
    if n == 0 {
        return Err(Error::Config("delta auto needs a non-empty private relation".into()));
    }
    Ok(1.0 / n as f64)
}
