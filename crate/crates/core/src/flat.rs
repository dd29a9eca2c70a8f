//! Attribute references over flattened and permutation relations, and the
//! flattened relation itself.

use crate::error::{Error, Result};
use crate::relational::{AttributeSpec, Relation};
use serde::{Deserialize, Serialize};

/// Marker for a slot attribute that has not been sampled yet.
pub const UNSET: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Owner {
    Household,
    /// A slot index (flattened relation) or a letter index (permutation relation), zero based.
    Individual(u8),
}

/// An attribute of a flattened relation (`Individual` = slot) or of a
/// permutation relation (`Individual` = letter), depending on context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Attr {
    pub owner: Owner,
    pub base: u16,
}

impl Attr {
    pub fn household(base: usize) -> Attr {
        Attr { owner: Owner::Household, base: base as u16 }
    }

    pub fn individual(index: usize, base: usize) -> Attr {
        Attr { owner: Owner::Individual(index as u8), base: base as u16 }
    }

    pub fn slot(&self) -> Option<usize> {
        match self.owner {
            Owner::Household => None,
            Owner::Individual(i) => Some(i as usize),
        }
    }

    pub fn is_household(&self) -> bool {
        self.owner == Owner::Household
    }
}

/// Distinct individual indices in first-use order.
pub fn individuals_in_order(attrs: &[Attr]) -> Vec<u8> {
    let mut out = Vec::new();
    for a in attrs {
        if let Owner::Individual(i) = a.owner {
            if !out.contains(&i) {
                out.push(i);
            }
        }
    }
    out
}

pub fn letter(i: u8) -> char {
    (b'a' + i) as char
}

/// Attribute names and domains shared by a flattened relation and its permutation relations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatSchema {
    pub household_attrs: Vec<AttributeSpec>,
    /// Index of the derived group-size attribute within `household_attrs`.
    pub size_attr: usize,
    pub individual_attrs: Vec<AttributeSpec>,
    /// Maximum group size N.
    pub max_size: usize,
}

impl FlatSchema {
    pub fn domain(&self, a: Attr) -> usize {
        match a.owner {
            Owner::Household => self.household_attrs[a.base as usize].domain_size as usize,
            Owner::Individual(_) => self.individual_attrs[a.base as usize].domain_size as usize,
        }
    }

    pub fn shape(&self, attrs: &[Attr]) -> Vec<usize> {
        attrs.iter().map(|a| self.domain(*a)).collect()
    }

    pub fn n_household(&self) -> usize {
        self.household_attrs.len()
    }

    pub fn n_individual(&self) -> usize {
        self.individual_attrs.len()
    }

    /// Household attributes other than the group size.
    pub fn household_without_size(&self) -> Vec<usize> {
        (0..self.household_attrs.len()).filter(|&i| i != self.size_attr).collect()
    }

    pub fn pr_name(&self, a: Attr) -> String {
        match a.owner {
            Owner::Household => format!("H.{}", self.household_attrs[a.base as usize].name),
            Owner::Individual(l) => format!("I_{}.{}", letter(l), self.individual_attrs[a.base as usize].name),
        }
    }

    pub fn fr_name(&self, a: Attr) -> String {
        match a.owner {
            Owner::Household => format!("H.{}", self.household_attrs[a.base as usize].name),
            Owner::Individual(s) => format!("I_{}.{}", s + 1, self.individual_attrs[a.base as usize].name),
        }
    }

    pub fn pr_set_name(&self, attrs: &[Attr]) -> String {
        let parts: Vec<String> = attrs.iter().map(|a| self.pr_name(*a)).collect();
        format!("{{{}}}", parts.join(", "))
    }
}

/// One row per household; slot `i` holds the i-th member in file order, NULL padded.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatRelation {
    pub schema: FlatSchema,
    /// `[household attribute][row]`.
    pub household: Vec<Vec<u32>>,
    /// `[slot * n_individual + attribute][row]`; NULL is the attribute's domain size.
    pub slots: Vec<Vec<u32>>,
    pub sizes: Vec<usize>,
    /// Source row of each household in the referenced relation.
    pub household_rows: Vec<usize>,
    /// Source rows of each household's members (empty for synthetic skeletons).
    pub members: Vec<Vec<usize>>,
}

impl FlatRelation {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn null_code(&self, base: usize) -> u32 {
        self.schema.individual_attrs[base].domain_size
    }

    pub fn slot_column(&self, slot: usize, base: usize) -> &Vec<u32> {
        &self.slots[slot * self.schema.n_individual() + base]
    }

    pub fn slot_column_mut(&mut self, slot: usize, base: usize) -> &mut Vec<u32> {
        let n = self.schema.n_individual();
        &mut self.slots[slot * n + base]
    }

    /// Value of a flattened-relation attribute (slot owner) in a row.
    pub fn value(&self, row: usize, a: Attr) -> u32 {
        match a.owner {
            Owner::Household => self.household[a.base as usize][row],
            Owner::Individual(s) => self.slot_column(s as usize, a.base as usize)[row],
        }
    }

    /// Value of individual attribute `base` for member `m` (zero based) of a row.
    pub fn member_value(&self, row: usize, m: usize, base: usize) -> u32 {
        self.slot_column(m, base)[row]
    }

    pub fn rows_of_size(&self, s: usize) -> Vec<usize> {
        (0..self.len()).filter(|&r| self.sizes[r] == s).collect()
    }

    /// Number of households per group size `0..=N`.
    pub fn size_counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.schema.max_size + 1];
        for &s in &self.sizes {
            c[s] += 1;
        }
        c
    }
}

/// Builds the flattened relation of `individuals` grouped by foreign key `fk`
/// against `households`, whose attribute `size_attr` must hold the group sizes.
pub fn flatten(
    individuals: &Relation,
    fk: usize,
    households: &Relation,
    size_attr: usize,
    max_size: usize,
) -> Result<FlatRelation> {
    let groups = individuals.groups(fk, households)?;
    let schema = FlatSchema {
        household_attrs: households.attributes.clone(),
        size_attr,
        individual_attrs: individuals.attributes.clone(),
        max_size,
    };
    let n_i = schema.n_individual();
    let n = households.len();
    let mut slots = vec![Vec::with_capacity(n); max_size * n_i];
    let mut sizes = Vec::with_capacity(n);
    for (h, g) in groups.iter().enumerate() {
        if g.len() > max_size {
            return Err(Error::CapExceeded {
                fk: format!("{}.{}", individuals.name, individuals.fk_attributes[fk]),
                size: g.len(),
                cap: max_size,
            });
        }
        if households.columns[size_attr][h] as usize != g.len() {
            return Err(Error::Integrity(format!(
                "{} row {} records group size {} but has {} members",
                households.name,
                households.keys[h],
                households.columns[size_attr][h],
                g.len()
            )));
        }
        sizes.push(g.len());
        for slot in 0..max_size {
            for b in 0..n_i {
                let v = match g.get(slot) {
                    Some(&r) => individuals.columns[b][r],
                    None => schema.individual_attrs[b].domain_size,
                };
                slots[slot * n_i + b].push(v);
            }
        }
    }
    Ok(FlatRelation {
        schema,
        household: households.columns.clone(),
        slots,
        sizes,
        household_rows: (0..n).collect(),
        members: groups,
    })
}

/// A flattened relation whose household part comes from `households` and whose
/// member slots are unsampled (`UNSET`) up to each row's size.
pub fn skeleton(households: &Relation, size_attr: usize, individual_attrs: &[AttributeSpec], max_size: usize) -> FlatRelation {
    let schema = FlatSchema {
        household_attrs: households.attributes.clone(),
        size_attr,
        individual_attrs: individual_attrs.to_vec(),
        max_size,
    };
    let n = households.len();
    let sizes: Vec<usize> = households.columns[size_attr].iter().map(|&s| (s as usize).min(max_size)).collect();
    let n_i = individual_attrs.len();
    let mut slots = Vec::with_capacity(max_size * n_i);
    for slot in 0..max_size {
        for a in individual_attrs {
            slots.push(sizes.iter().map(|&s| if slot < s { UNSET } else { a.domain_size }).collect());
        }
    }
    FlatRelation {
        schema,
        household: households.columns.clone(),
        slots,
        sizes,
        household_rows: (0..n).collect(),
        members: vec![Vec::new(); n],
    }
}

/// Column names for the relations produced by [`decompose`].
#[derive(Debug, Clone)]
pub struct DecomposeNames {
    pub individual_relation: String,
    pub individual_key: String,
    pub fk_attribute: String,
    pub household_relation: String,
    pub household_key: String,
}

/// Member rows of a flattened relation as an individual relation referencing `household_keys`.
pub fn decompose_individuals(fr: &FlatRelation, names: &DecomposeNames, household_keys: &[String]) -> Result<Relation> {
    let n_i = fr.schema.n_individual();
    let mut rel = Relation {
        name: names.individual_relation.clone(),
        primary_key: names.individual_key.clone(),
        attributes: fr.schema.individual_attrs.clone(),
        keys: Vec::new(),
        fk_attributes: vec![names.fk_attribute.clone()],
        fks: vec![Vec::new()],
        columns: vec![Vec::new(); n_i],
    };
    let mut next = 1usize;
    for row in 0..fr.len() {
        for slot in 0..fr.sizes[row] {
            for b in 0..n_i {
                let v = fr.member_value(row, slot, b);
                if v == UNSET || v >= fr.schema.individual_attrs[b].domain_size {
                    return Err(Error::IncompleteRow {
                        row,
                        detail: format!("slot {} attribute {} is not set", slot + 1, fr.schema.individual_attrs[b].name),
                    });
                }
                rel.columns[b].push(v);
            }
            rel.keys.push(next.to_string());
            rel.fks[0].push(household_keys[row].clone());
            next += 1;
        }
    }
    Ok(rel)
}

/// Splits a flattened relation into an individual and a household relation with
/// fresh sequential keys; the household relation keeps the size attribute.
pub fn decompose(fr: &FlatRelation, names: &DecomposeNames) -> Result<(Relation, Relation)> {
    let keys: Vec<String> = (1..=fr.len()).map(|i| i.to_string()).collect();
    let households = Relation {
        name: names.household_relation.clone(),
        primary_key: names.household_key.clone(),
        attributes: fr.schema.household_attrs.clone(),
        keys: keys.clone(),
        fk_attributes: Vec::new(),
        fks: Vec::new(),
        columns: fr.household.clone(),
    };
    let individuals = decompose_individuals(fr, names, &keys)?;
    Ok((individuals, households))
}
