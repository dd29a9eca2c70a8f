//! Schemas, relations with foreign keys, CSV loading and writing, discretization
//! and the derived group-size attribute.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub domain_size: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_representatives: Option<Vec<f64>>,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, domain_size: u32) -> Self {
        AttributeSpec { name: name.into(), domain_size, bin_representatives: None }
    }

    /// Numeric value used for correlation reports: the bin midpoint if known, else the code.
    pub fn representative(&self, code: u32) -> f64 {
        match &self.bin_representatives {
            Some(r) => r[code as usize],
            None => code as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForeignKeySpec {
    pub attribute: String,
    pub references: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_group_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_group_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Privacy {
    Primary,
    Secondary,
    Public,
}

impl Privacy {
    pub fn is_private(self) -> bool {
        self != Privacy::Public
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub name: String,
    pub primary_key: String,
    #[serde(default)]
    pub attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKeySpec>,
    pub privacy: Privacy,
    /// Default group-size cap for this relation's foreign keys.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_group_size: Option<usize>,
}

impl RelationSchema {
    pub fn fk_label(&self, fk: usize) -> String {
        format!("{}.{}", self.name, self.foreign_keys[fk].attribute)
    }

    pub fn declared_cap(&self, fk: usize) -> Option<usize> {
        self.foreign_keys[fk].max_group_size.or(self.max_group_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub relations: Vec<RelationSchema>,
}

/// Identifies one foreign key: (referencing relation index, foreign key index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FkRef {
    pub relation: usize,
    pub fk: usize,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Schema> {
        let s: Schema = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Schema::from_json(&text)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationSchema> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn referenced(&self, fk: FkRef) -> usize {
        let name = &self.relations[fk.relation].foreign_keys[fk.fk].references;
        self.index_of(name).expect("validated")
    }

    pub fn fk_label(&self, fk: FkRef) -> String {
        self.relations[fk.relation].fk_label(fk.fk)
    }

    pub fn find_fk(&self, label: &str) -> Option<FkRef> {
        self.all_fks().into_iter().find(|f| self.fk_label(*f) == label)
    }

    pub fn all_fks(&self) -> Vec<FkRef> {
        let mut out = Vec::new();
        for (i, r) in self.relations.iter().enumerate() {
            for j in 0..r.foreign_keys.len() {
                out.push(FkRef { relation: i, fk: j });
            }
        }
        out
    }

    /// Foreign keys whose referencing relation is private.
    pub fn private_fks(&self) -> Vec<FkRef> {
        self.all_fks().into_iter().filter(|f| self.relations[f.relation].privacy.is_private()).collect()
    }

    /// Private foreign keys pointing at relation `r`.
    pub fn incoming_private(&self, r: usize) -> Vec<FkRef> {
        self.private_fks().into_iter().filter(|f| self.referenced(*f) == r).collect()
    }

    /// Relation indices ordered so that every referenced relation precedes its referencers.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.relations.len();
        let mut indeg = vec![0usize; n];
        let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for f in self.all_fks() {
            let to = self.referenced(f);
            out_edges[to].push(f.relation);
            indeg[f.relation] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &w in &out_edges[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.push(w);
                    ready.sort_unstable_by(|a, b| b.cmp(a));
                }
            }
        }
        if order.len() != n {
            return Err(Error::Schema("foreign key graph has a cycle".into()));
        }
        Ok(order)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for r in &self.relations {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Schema(format!("duplicate relation {}", r.name)));
            }
            let mut cols = HashSet::new();
            cols.insert(r.primary_key.as_str());
            for a in &r.attributes {
                if a.domain_size == 0 {
                    return Err(Error::Schema(format!("{}.{} has an empty domain", r.name, a.name)));
                }
                if let Some(rep) = &a.bin_representatives {
                    if rep.len() != a.domain_size as usize {
                        return Err(Error::Schema(format!(
                            "{}.{} has {} bin representatives for domain {}",
                            r.name,
                            a.name,
                            rep.len(),
                            a.domain_size
                        )));
                    }
                }
                if !cols.insert(a.name.as_str()) {
                    return Err(Error::Schema(format!("duplicate column {}.{}", r.name, a.name)));
                }
            }
            for fk in &r.foreign_keys {
                if !cols.insert(fk.attribute.as_str()) {
                    return Err(Error::Schema(format!("duplicate column {}.{}", r.name, fk.attribute)));
                }
                if fk.references == r.name {
                    return Err(Error::Schema(format!("{} references itself", r.name)));
                }
                if let Some(t) = fk.tau {
                    if !(t > 0.0) || !t.is_finite() {
                        return Err(Error::Schema(format!("{}.{} has invalid tau", r.name, fk.attribute)));
                    }
                }
                if fk.max_group_size == Some(0) {
                    return Err(Error::Schema(format!("{}.{} has a zero group-size cap", r.name, fk.attribute)));
                }
            }
        }
        for r in &self.relations {
            for fk in &r.foreign_keys {
                let target = self
                    .relation(&fk.references)
                    .ok_or_else(|| Error::Schema(format!("{} references unknown relation {}", r.name, fk.references)))?;
                if target.privacy.is_private() && !r.privacy.is_private() {
                    return Err(Error::Schema(format!(
                        "public relation {} references private relation {}",
                        r.name, target.name
                    )));
                }
            }
        }
        self.topological_order()?;
        let primaries: Vec<usize> =
            (0..self.relations.len()).filter(|&i| self.relations[i].privacy == Privacy::Primary).collect();
        let any_private = self.relations.iter().any(|r| r.privacy.is_private());
        if any_private && primaries.len() != 1 {
            return Err(Error::Schema(format!(
                "exactly one primary private relation is required, found {}",
                primaries.len()
            )));
        }
        if let Some(&p) = primaries.first() {
            if self.relations[p].foreign_keys.iter().any(|fk| {
                self.relation(&fk.references).map(|t| t.privacy.is_private()).unwrap_or(false)
            }) {
                return Err(Error::Schema("the primary relation cannot reference a private relation".into()));
            }
            for (i, r) in self.relations.iter().enumerate() {
                if r.privacy == Privacy::Secondary && !self.depends_on(i, p) {
                    return Err(Error::Schema(format!(
                        "secondary relation {} does not depend on the primary relation",
                        r.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn depends_on(&self, from: usize, target: usize) -> bool {
        if from == target {
            return true;
        }
        self.relations[from].foreign_keys.iter().any(|fk| {
            let to = self.index_of(&fk.references).unwrap();
            self.depends_on(to, target)
        })
    }
}

/// Column-major relation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    pub primary_key: String,
    pub attributes: Vec<AttributeSpec>,
    pub keys: Vec<String>,
    pub fk_attributes: Vec<String>,
    /// One column of referenced keys per foreign key.
    pub fks: Vec<Vec<String>>,
    /// One column of codes per attribute.
    pub columns: Vec<Vec<u32>>,
}

impl Relation {
    pub fn empty(schema: &RelationSchema) -> Relation {
        Relation {
            name: schema.name.clone(),
            primary_key: schema.primary_key.clone(),
            attributes: schema.attributes.clone(),
            keys: Vec::new(),
            fk_attributes: schema.foreign_keys.iter().map(|f| f.attribute.clone()).collect(),
            fks: vec![Vec::new(); schema.foreign_keys.len()],
            columns: vec![Vec::new(); schema.attributes.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn row(&self, i: usize) -> Vec<u32> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn key_index(&self) -> HashMap<&str, usize> {
        self.keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect()
    }

    /// Members of each referenced row in file order.
    pub fn groups(&self, fk: usize, referenced: &Relation) -> Result<Vec<Vec<usize>>> {
        let idx = referenced.key_index();
        let mut groups = vec![Vec::new(); referenced.len()];
        for (row, key) in self.fks[fk].iter().enumerate() {
            let h = idx.get(key.as_str()).ok_or_else(|| {
                Error::Integrity(format!(
                    "{}.{} value {key} has no match in {}",
                    self.name, self.fk_attributes[fk], referenced.name
                ))
            })?;
            groups[*h].push(row);
        }
        Ok(groups)
    }

    /// Copy keeping only the rows listed, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Relation {
        Relation {
            name: self.name.clone(),
            primary_key: self.primary_key.clone(),
            attributes: self.attributes.clone(),
            keys: rows.iter().map(|&r| self.keys[r].clone()).collect(),
            fk_attributes: self.fk_attributes.clone(),
            fks: self.fks.iter().map(|c| rows.iter().map(|&r| c[r].clone()).collect()).collect(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
        }
    }

    /// Drops trailing attributes so only the first `n` remain.
    pub fn truncate_attributes(&mut self, n: usize) {
        self.attributes.truncate(n);
        self.columns.truncate(n);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let p = path.display().to_string();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv { path: p.clone(), msg: e.to_string() })?;
        let mut header = vec![self.primary_key.clone()];
        header.extend(self.attributes.iter().map(|a| a.name.clone()));
        header.extend(self.fk_attributes.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Csv { path: p.clone(), msg: e.to_string() })?;
        for i in 0..self.len() {
            let mut rec = vec![self.keys[i].clone()];
            rec.extend(self.columns.iter().map(|c| c[i].to_string()));
            rec.extend(self.fks.iter().map(|c| c[i].clone()));
            w.write_record(&rec).map_err(|e| Error::Csv { path: p.clone(), msg: e.to_string() })?;
        }
        w.flush().map_err(|e| Error::io(p, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    pub schema: Schema,
    pub relations: Vec<Relation>,
}

impl Database {
    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }

    /// Checks keys, codes, referential integrity and group-size bounds.
    pub fn validate(&self) -> Result<()> {
        self.check(true)
    }

    /// Like [`Database::validate`] but allows referenced rows without members,
    /// which synthetic data may contain.
    pub fn check_integrity(&self) -> Result<()> {
        self.check(false)
    }

    fn check(&self, min_groups: bool) -> Result<()> {
        for (rs, rel) in self.schema.relations.iter().zip(&self.relations) {
            let mut seen = HashSet::new();
            for k in &rel.keys {
                if !seen.insert(k.as_str()) {
                    return Err(Error::Integrity(format!("duplicate key {k} in {}", rel.name)));
                }
            }
            for (a, col) in rel.attributes.iter().zip(&rel.columns) {
                if let Some(v) = col.iter().find(|v| **v >= a.domain_size) {
                    return Err(Error::Integrity(format!(
                        "{}.{} value {v} outside domain {}",
                        rel.name, a.name, a.domain_size
                    )));
                }
            }
            for (j, fk) in rs.foreign_keys.iter().enumerate() {
                let target = self.relation(&fk.references).expect("validated schema");
                let groups = rel.groups(j, target)?;
                let max = groups.iter().map(|g| g.len()).max().unwrap_or(0);
                if let Some(cap) = rs.declared_cap(j) {
                    if max > cap {
                        return Err(Error::CapExceeded { fk: rs.fk_label(j), size: max, cap });
                    }
                }
                let target_private = self.schema.relation(&fk.references).unwrap().privacy.is_private();
                if min_groups && rs.privacy.is_private() && target_private && fk.min_group_size.unwrap_or(1) > 0 {
                    if let Some(h) = groups.iter().position(|g| g.is_empty()) {
                        return Err(Error::Integrity(format!(
                            "{} row {} has no referencing tuples in {} (declare min_group_size 0 to allow)",
                            target.name,
                            target.keys[h],
                            rs.fk_label(j)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Group-size cap for a foreign key: the declared one, else the observed maximum.
    pub fn group_cap(&self, fk: FkRef) -> Result<usize> {
        let rs = &self.schema.relations[fk.relation];
        if let Some(c) = rs.declared_cap(fk.fk) {
            return Ok(c);
        }
        let target = &self.relations[self.schema.referenced(fk)];
        let observed = self.relations[fk.relation].groups(fk.fk, target)?.iter().map(|g| g.len()).max().unwrap_or(0);
        log::warn!(
            "no max_group_size declared for {}; using the observed maximum {observed}, which is data dependent",
            rs.fk_label(fk.fk)
        );
        Ok(observed.max(1))
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for r in &self.relations {
            r.write_csv(&dir.join(format!("{}.csv", r.name)))?;
        }
        Ok(())
    }
}

fn parse_code(raw: &str, rel: &str, col: &str, row: usize) -> Result<u32> {
    raw.trim()
        .parse::<u32>()
        .map_err(|_| Error::Type(format!("{rel}.{col} row {row}: '{raw}' is not a non-negative integer code")))
}

/// Reads one relation from a CSV file with a header row.
pub fn read_relation(schema: &RelationSchema, path: &Path) -> Result<Relation> {
    let p = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv { path: p.clone(), msg: e.to_string() })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv { path: p.clone(), msg: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{p}: missing column {name}")))
    };
    let pk = col(&schema.primary_key)?;
    let attr_cols = schema.attributes.iter().map(|a| col(&a.name)).collect::<Result<Vec<_>>>()?;
    let fk_cols = schema.foreign_keys.iter().map(|f| col(&f.attribute)).collect::<Result<Vec<_>>>()?;
    let mut rel = Relation::empty(schema);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv { path: p.clone(), msg: e.to_string() })?;
        rel.keys.push(rec.get(pk).unwrap_or("").trim().to_string());
        for (j, &c) in attr_cols.iter().enumerate() {
            let v = parse_code(rec.get(c).unwrap_or(""), &schema.name, &schema.attributes[j].name, row)?;
            rel.columns[j].push(v);
        }
        for (j, &c) in fk_cols.iter().enumerate() {
            rel.fks[j].push(rec.get(c).unwrap_or("").trim().to_string());
        }
    }
    Ok(rel)
}

/// Loads `<dir>/<relation>.csv` for every relation and validates the result.
pub fn load_database(schema: &Schema, dir: &Path) -> Result<Database> {
    let db = load_unchecked(schema, dir)?;
    db.validate()?;
    Ok(db)
}

/// Loads without the group-size lower bound; used for synthetic outputs.
pub fn load_synthetic(schema: &Schema, dir: &Path) -> Result<Database> {
    let db = load_unchecked(schema, dir)?;
    db.check_integrity()?;
    Ok(db)
}

fn load_unchecked(schema: &Schema, dir: &Path) -> Result<Database> {
    schema.validate()?;
    let relations = schema
        .relations
        .iter()
        .map(|r| read_relation(r, &dir.join(format!("{}.csv", r.name))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Database { schema: schema.clone(), relations })
}

/// Equal-width binning over the observed range; returns codes and bin midpoints.
pub fn discretize(values: &[f64], num_bins: usize) -> Result<(Vec<u32>, Vec<f64>)> {
    if num_bins == 0 {
        return Err(Error::Domain("number of bins must be positive".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Type("non-finite value cannot be discretized".into()));
    }
    if values.is_empty() {
        return Ok((Vec::new(), vec![0.0; num_bins]));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / num_bins as f64;
    let codes = values
        .iter()
        .map(|&v| {
            if width == 0.0 {
                0
            } else {
                (((v - lo) / width).floor() as usize).min(num_bins - 1) as u32
            }
        })
        .collect();
    let reps = (0..num_bins).map(|b| lo + width * (b as f64 + 0.5)).collect();
    Ok((codes, reps))
}

/// Parses a raw text column and bins it into a new attribute.
pub fn discretize_column(name: &str, raw: &[String], num_bins: usize) -> Result<(Vec<u32>, AttributeSpec)> {
    let vals = raw
        .iter()
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Type(format!("{name}: '{s}' is not numeric")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (codes, reps) = discretize(&vals, num_bins)?;
    Ok((
        codes,
        AttributeSpec { name: name.to_string(), domain_size: num_bins as u32, bin_representatives: Some(reps) },
    ))
}

pub fn size_attribute_name(fk_label: &str) -> String {
    format!("{fk_label}#size")
}

/// Group size of every referenced row, length = `referenced.len()`.
pub fn group_sizes(referencing: &Relation, fk: usize, referenced: &Relation) -> Result<Vec<usize>> {
    Ok(referencing.groups(fk, referenced)?.iter().map(|g| g.len()).collect())
}

/// Appends the derived group-size attribute (domain `cap + 1`) to the referenced relation.
pub fn augment_size_attribute(
    referenced: &Relation,
    referencing: &Relation,
    fk: usize,
    cap: usize,
) -> Result<Relation> {
    let label = format!("{}.{}", referencing.name, referencing.fk_attributes[fk]);
    let sizes = group_sizes(referencing, fk, referenced)?;
    if let Some(&m) = sizes.iter().find(|&&s| s > cap) {
        return Err(Error::CapExceeded { fk: label, size: m, cap });
    }
    let mut out = referenced.clone();
    out.attributes.push(AttributeSpec::new(size_attribute_name(&label), cap as u32 + 1));
    out.columns.push(sizes.iter().map(|&s| s as u32).collect());
    Ok(out)
}

/// Number of referenced rows with each group size `0..=cap`.
pub fn count_group_sizes(referencing: &Relation, fk: usize, referenced: &Relation, cap: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; cap + 1];
    for s in group_sizes(referencing, fk, referenced)? {
        if s > cap {
            return Err(Error::CapExceeded {
                fk: format!("{}.{}", referencing.name, referencing.fk_attributes[fk]),
                size: s,
                cap,
            });
        }
        counts[s] += 1;
    }
    Ok(counts)
}

/// Histogram helper used by reports.
pub fn histogram(values: &[u32], domain: u32) -> Vec<u64> {
    let mut h = vec![0u64; domain as usize];
    for &v in values {
        h[v as usize] += 1;
    }
    h
}

/// Key → row lookup for every relation, by name.
pub fn key_indexes(db: &Database) -> BTreeMap<String, HashMap<String, usize>> {
    db.relations
        .iter()
        .map(|r| (r.name.clone(), r.keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretize_equal_width() {
        let ages = [10., 12., 25., 25., 25., 30., 35., 40., 55., 60.];
        let (codes, reps) = discretize(&ages, 5).unwrap();
        assert_eq!(codes, vec![0, 0, 1, 1, 1, 2, 2, 3, 4, 4]);
        assert_eq!(reps, vec![15., 25., 35., 45., 55.]);
    }

    #[test]
    fn discretize_rejects_text() {
        let raw = vec!["1".to_string(), "abc".to_string()];
        assert!(matches!(discretize_column("AGE", &raw, 2), Err(Error::Type(_))));
    }

    #[test]
    fn constant_column_single_bin() {
        let (codes, _) = discretize(&[3.0, 3.0], 4).unwrap();
        assert_eq!(codes, vec![0, 0]);
    }
}
