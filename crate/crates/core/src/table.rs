//! Dense row-major contingency tables and factors over variable ids.

use serde::Serialize;

/// Dense table indexed by a mixed-radix tuple; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn cell_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Like [`cell_count`] but in floating point so huge products do not overflow.
pub fn cell_count_f64(shape: &[usize]) -> f64 {
    shape.iter().map(|&d| d as f64).product()
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For every cell of `shape`, the flat index of the cell obtained by keeping only `axes`
/// (in the order given).
pub fn projection_map(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let sub_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let sub_strides = strides(&sub_shape);
    let mut weight = vec![0usize; shape.len()];
    for (k, &a) in axes.iter().enumerate() {
        weight[a] += sub_strides[k];
    }
    let n = cell_count(shape);
    let mut out = Vec::with_capacity(n);
    let mut counter = vec![0usize; shape.len()];
    let mut cur = 0usize;
    for _ in 0..n {
        out.push(cur);
        for ax in (0..shape.len()).rev() {
            counter[ax] += 1;
            cur += weight[ax];
            if counter[ax] < shape[ax] {
                break;
            }
            cur -= weight[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    out
}

impl Table {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = cell_count(&shape);
        Table { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Self {
        let n = cell_count(&shape);
        Table { shape, data: vec![v; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut f = 0;
        for (i, &v) in idx.iter().enumerate() {
            debug_assert!(v < self.shape[i]);
            f = f * self.shape[i] + v;
        }
        f
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for i in (0..self.shape.len()).rev() {
            idx[i] = flat % self.shape[i];
            flat /= self.shape[i];
        }
        idx
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Sums out every axis not listed; the result's axes follow `axes` order.
    pub fn project(&self, axes: &[usize]) -> Table {
        let shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let mut out = Table::zeros(shape);
        if axes.len() == self.shape.len() && axes.iter().enumerate().all(|(i, &a)| i == a) {
            out.data.copy_from_slice(&self.data);
            return out;
        }
        let map = projection_map(&self.shape, axes);
        for (v, &m) in self.data.iter().zip(&map) {
            out.data[m] += v;
        }
        out
    }

    pub fn l1_distance(&self, other: &Table) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn scale(&mut self, f: f64) {
        for v in &mut self.data {
            *v *= f;
        }
    }

    /// Outer product; the result's axes are `self` followed by `other`.
    pub fn outer(&self, other: &Table) -> Table {
        let mut shape = self.shape.clone();
        shape.extend_from_slice(&other.shape);
        let mut data = Vec::with_capacity(self.len() * other.len());
        for a in &self.data {
            for b in &other.data {
                data.push(a * b);
            }
        }
        Table { shape, data }
    }
}

/// A table whose axes are labelled by sorted variable ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub table: Table,
}

impl Factor {
    pub fn new(vars: Vec<usize>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(cell_count(&shape), data.len());
        Factor { vars, table: Table { shape, data } }
    }

    pub fn constant(vars: Vec<usize>, domains: &[usize], v: f64) -> Self {
        let shape = vars.iter().map(|&x| domains[x]).collect();
        Factor { vars, table: Table::filled(shape, v) }
    }

    pub fn card(&self) -> &[usize] {
        &self.table.shape
    }

    fn axes_of(&self, sub: &[usize]) -> Vec<usize> {
        sub.iter()
            .map(|v| self.vars.iter().position(|x| x == v).expect("variable not in factor"))
            .collect()
    }

    /// Marginal onto `keep` (must be a subset of `vars`; kept sorted).
    pub fn marginalize(&self, keep: &[usize]) -> Factor {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        let axes = self.axes_of(&keep);
        Factor { vars: keep, table: self.table.project(&axes) }
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut vars: Vec<usize> = self.vars.iter().chain(&other.vars).copied().collect();
        vars.sort_unstable();
        vars.dedup();
        let shape: Vec<usize> = vars
            .iter()
            .map(|v| {
                if let Some(i) = self.vars.iter().position(|x| x == v) {
                    self.table.shape[i]
                } else {
                    other.table.shape[other.vars.iter().position(|x| x == v).unwrap()]
                }
            })
            .collect();
        let ax_a: Vec<usize> = self.vars.iter().map(|v| vars.iter().position(|x| x == v).unwrap()).collect();
        let ax_b: Vec<usize> = other.vars.iter().map(|v| vars.iter().position(|x| x == v).unwrap()).collect();
        let ma = projection_map(&shape, &ax_a);
        let mb = projection_map(&shape, &ax_b);
        let data = ma
            .iter()
            .zip(&mb)
            .map(|(&i, &j)| self.table.data[i] * other.table.data[j])
            .collect();
        Factor { vars, table: Table { shape, data } }
    }

    /// Multiplies in a factor over a subset of this factor's variables.
    pub fn mul_sub(&mut self, sub: &Factor) {
        let axes = self.axes_of(&sub.vars);
        let map = projection_map(&self.table.shape, &axes);
        for (v, &m) in self.table.data.iter_mut().zip(&map) {
            *v *= sub.table.data[m];
        }
    }

    /// Divides by a factor over a subset of variables, treating 0/0 as 0.
    pub fn div_sub(&mut self, sub: &Factor) {
        let axes = self.axes_of(&sub.vars);
        let map = projection_map(&self.table.shape, &axes);
        for (v, &m) in self.table.data.iter_mut().zip(&map) {
            let d = sub.table.data[m];
            *v = if d == 0.0 { 0.0 } else { *v / d };
        }
    }

    /// Zeroes every cell inconsistent with the given `(var, value)` evidence.
    pub fn restrict(&mut self, evidence: &[(usize, usize)]) {
        let rel: Vec<(usize, usize)> = evidence
            .iter()
            .filter_map(|&(v, x)| self.vars.iter().position(|y| *y == v).map(|a| (a, x)))
            .collect();
        if rel.is_empty() {
            return;
        }
        let st = strides(&self.table.shape);
        let shape = self.table.shape.clone();
        for (f, v) in self.table.data.iter_mut().enumerate() {
            if rel.iter().any(|&(a, x)| (f / st[a]) % shape[a] != x) {
                *v = 0.0;
            }
        }
    }

    pub fn normalize(&mut self) -> f64 {
        let s = self.table.sum();
        if s > 0.0 {
            self.table.scale(1.0 / s);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_and_permute() {
        let t = Table { shape: vec![2, 3], data: vec![1., 2., 3., 4., 5., 6.] };
        assert_eq!(t.project(&[0]).data, vec![6., 15.]);
        assert_eq!(t.project(&[1]).data, vec![5., 7., 9.]);
        assert_eq!(t.project(&[1, 0]).data, vec![1., 4., 2., 5., 3., 6.]);
        assert_eq!(t.project(&[]).data, vec![21.]);
    }

    #[test]
    fn factor_product_matches_pointwise() {
        let a = Factor::new(vec![0, 1], vec![2, 2], vec![1., 2., 3., 4.]);
        let b = Factor::new(vec![1, 2], vec![2, 3], vec![1., 2., 3., 4., 5., 6.]);
        let p = a.product(&b);
        assert_eq!(p.vars, vec![0, 1, 2]);
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..3 {
                    let want = a.table.get(&[x, y]) * b.table.get(&[y, z]);
                    assert_eq!(p.table.get(&[x, y, z]), want);
                }
            }
        }
        let m = p.marginalize(&[2, 0]);
        assert_eq!(m.vars, vec![0, 2]);
        assert!((m.table.sum() - p.table.sum()).abs() < 1e-12);
    }

    #[test]
    fn restrict_zeroes_other_values() {
        let mut a = Factor::new(vec![3, 5], vec![2, 3], vec![1.; 6]);
        a.restrict(&[(5, 1), (9, 0)]);
        assert_eq!(a.table.data, vec![0., 1., 0., 0., 1., 0.]);
    }
}
