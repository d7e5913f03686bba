//! Symmetric sparse matrices and a deterministic sparse LDL^T direct solver.
//!
//! The factorization is a supernodal LDL^T without pivoting, so the caller
//! supplies an elimination order under which every pivot is nonzero (see
//! `fem::elimination_order`). Solves finish with iterative refinement.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::perm::PermRef;
use faer::sparse::linalg::amd;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Mat, Par, Side, Spec};

use crate::error::{LabError, Result};

/// Upper-triangle accumulator for a symmetric matrix.
#[derive(Debug, Clone, Default)]
pub struct SymTriplets {
    pub n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymTriplets {
    pub fn new(n: usize) -> SymTriplets {
        SymTriplets {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> SymTriplets {
        SymTriplets {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    /// Adds `v` at `(i, j)` and, implicitly, at `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i.min(j), i.max(j), v));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Symmetric matrix stored as its upper triangle in compressed columns,
/// row indices sorted within each column.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymMatrix {
    /// Sums duplicates in a fixed order, so the result does not depend on how
    /// the triplets were produced as long as their sequence is the same.
    pub fn from_triplets(t: &SymTriplets) -> SymMatrix {
        let n = t.n;
        let mut count = vec![0usize; n + 1];
        for &(_, j, _) in &t.entries {
            count[j + 1] += 1;
        }
        for j in 0..n {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let mut rows = vec![0usize; t.entries.len()];
        let mut vals = vec![0.0; t.entries.len()];
        for &(i, j, v) in &t.entries {
            rows[next[j]] = i;
            vals[next[j]] = v;
            next[j] += 1;
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(t.entries.len() / 2);
        let mut values = Vec::with_capacity(t.entries.len() / 2);
        col_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for j in 0..n {
            order.clear();
            order.extend(count[j]..count[j + 1]);
            // stable: equal rows keep insertion order, so sums are reproducible
            order.sort_by_key(|&k| rows[k]);
            let mut last = usize::MAX;
            for &k in &order {
                if rows[k] == last {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    row_idx.push(rows[k]);
                    values.push(vals[k]);
                    last = rows[k];
                }
            }
            col_ptr.push(row_idx.len());
        }
        SymMatrix {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz_upper(&self) -> usize {
        self.row_idx.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = (i.min(j), i.max(j));
        let rows = &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]];
        match rows.binary_search(&i) {
            Ok(k) => self.values[self.col_ptr[j] + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                let v = self.values[k];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Largest absolute entry of each row (used to scale residuals).
    pub fn row_max(&self) -> Vec<f64> {
        let mut m = vec![0.0f64; self.n];
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                let v = self.values[k].abs();
                m[i] = m[i].max(v);
                m[j] = m[j].max(v);
            }
        }
        m
    }

    fn faer_ref(&self) -> SparseColMatRef<'_, usize, f64> {
        let sym = SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx);
        SparseColMatRef::new(sym, &self.values)
    }
}

/// Approximate minimum degree order of a symmetric graph given as adjacency
/// lists (no self loops needed). Returns `order[k]` = vertex eliminated k-th.
pub fn amd_order(adjacency: &[Vec<usize>]) -> Result<Vec<usize>> {
    let n = adjacency.len();
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::new();
    col_ptr.push(0);
    for (j, nb) in adjacency.iter().enumerate() {
        let mut rows: Vec<usize> = nb.iter().copied().filter(|&i| i < j).collect();
        rows.sort_unstable();
        rows.dedup();
        row_idx.extend(rows);
        col_ptr.push(row_idx.len());
    }
    let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    let mut mem = MemBuffer::new(amd::order_scratch::<usize>(n, row_idx.len()));
    amd::order(&mut perm, &mut perm_inv, sym, amd::Control::default(), MemStack::new(&mut mem))
        .map_err(|e| LabError::Internal(format!("ordering failed: {e:?}")))?;
    Ok(perm)
}

/// Factorized symmetric matrix.
#[derive(Debug)]
pub struct Ldlt {
    a: SymMatrix,
    symbolic: SymbolicCholesky<usize>,
    l_values: Vec<f64>,
}

/// Relative residual the solver must reach.
pub const SOLVE_TOLERANCE: f64 = 1e-9;
const REFINEMENT_STEPS: usize = 4;

impl Ldlt {
    /// Factors `a` eliminating unknowns in the sequence `order`.
    /// `label` names an unknown for the pivot diagnostics.
    pub fn factor(a: SymMatrix, order: &[usize], label: &dyn Fn(usize) -> String) -> Result<Ldlt> {
        let n = a.n;
        if order.len() != n {
            return Err(LabError::Internal(format!("order has {} entries for {n} unknowns", order.len())));
        }
        let mut inv = vec![usize::MAX; n];
        for (k, &i) in order.iter().enumerate() {
            if i >= n || inv[i] != usize::MAX {
                return Err(LabError::Internal("elimination order is not a permutation".into()));
            }
            inv[i] = k;
        }
        let perm = PermRef::new_checked(order, &inv, n);
        let symbolic = factorize_symbolic_cholesky(
            a.faer_ref().symbolic(),
            Side::Upper,
            SymmetricOrdering::Custom(perm),
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| LabError::Internal(format!("symbolic factorization: {e:?}")))?;
        let mut l_values = vec![0.0; symbolic.len_val()];
        let mut mem = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Spec::default()));
        let res = symbolic.factorize_numeric_ldlt(
            &mut l_values,
            a.faer_ref(),
            Side::Upper,
            LdltRegularization::default(),
            Par::Seq,
            MemStack::new(&mut mem),
            Spec::default(),
        );
        if let Err(e) = res {
            let step = match e {
                faer::linalg::cholesky::ldlt::factor::LdltError::ZeroPivot { index } => index,
            };
            let dof = order.get(step).copied().unwrap_or(0);
            let scale = a.row_max().iter().cloned().fold(0.0, f64::max);
            return Err(LabError::Factorization {
                step,
                dof: label(dof),
                pivot: 0.0,
                scale,
            });
        }
        let out = Ldlt {
            a,
            symbolic,
            l_values,
        };
        if out.l_values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Factorization {
                step: 0,
                dof: "unknown".into(),
                pivot: f64::NAN,
                scale: out.a.row_max().iter().cloned().fold(0.0, f64::max),
            });
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.a.n
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.a
    }

    /// Nonzeros stored in the factor.
    pub fn factor_nnz(&self) -> usize {
        self.l_values.len()
    }

    fn raw_solve(&self, rhs: &mut Mat<f64>) {
        let k = rhs.ncols();
        let l = LdltRef::new(&self.symbolic, &self.l_values);
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(k, Par::Seq));
        l.solve_in_place_with_conj(Conj::No, rhs.as_mut(), Par::Seq, MemStack::new(&mut mem));
    }

    /// Solves `A x = b`, refining until the residual is at most
    /// `SOLVE_TOLERANCE` relative to `|A| |x| + |b|`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.solve_many(&[b.to_vec()])?;
        Ok(out.pop().unwrap())
    }

    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.a.n;
        let k = rhs.len();
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut m = Mat::<f64>::from_fn(n, k, |i, j| rhs[j][i]);
        self.raw_solve(&mut m);
        let mut xs: Vec<Vec<f64>> = (0..k).map(|j| (0..n).map(|i| m[(i, j)]).collect()).collect();
        for _ in 0..REFINEMENT_STEPS {
            let res: Vec<(Vec<f64>, f64)> =
                xs.iter().zip(rhs).map(|(x, b)| self.residual(x, b)).collect();
            if res.iter().all(|(_, rel)| *rel <= 1e-14) {
                break;
            }
            let mut m = Mat::<f64>::from_fn(n, k, |i, j| res[j].0[i]);
            self.raw_solve(&mut m);
            for (j, x) in xs.iter_mut().enumerate() {
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi += m[(i, j)];
                }
            }
        }
        for (x, b) in xs.iter().zip(rhs) {
            let (_, rel) = self.residual(x, b);
            if !(rel <= SOLVE_TOLERANCE) {
                return Err(LabError::SolveAccuracy(rel));
            }
        }
        Ok(xs)
    }

    /// Residual `b - A x` and its norm relative to `||A|| ||x|| + ||b||` (max norms).
    pub fn residual(&self, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
        let ax = self.a.mul(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let amax = self.a.row_max().iter().fold(0.0f64, |m, v| m.max(*v));
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let denom = amax * xmax + bmax;
        let rel = if denom > 0.0 { rmax / denom } else { rmax };
        (r, rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SymMatrix {
        let mut t = SymTriplets::new(n);
        for i in 0..n {
            t.add(i, i, 2.0);
            if i + 1 < n {
                t.add(i, i + 1, -1.0);
            }
        }
        SymMatrix::from_triplets(&t)
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = SymTriplets::new(2);
        t.add(0, 1, 1.0);
        t.add(1, 0, 2.0);
        t.add(1, 1, 4.0);
        let a = SymMatrix::from_triplets(&t);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.mul(&[1.0, 1.0]), vec![3.0, 7.0]);
    }

    #[test]
    fn solves_spd_with_any_order() {
        let n = 50;
        let a = laplacian_1d(n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul(&x_true);
        let order: Vec<usize> = (0..n).rev().collect();
        let f = Ldlt::factor(a, &order, &|i| format!("x{i}")).unwrap();
        let x = f.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn saddle_point_with_safe_order() {
        // [[2, 1], [1, 0]]: eliminating the zero diagonal first is fatal
        let mut t = SymTriplets::new(2);
        t.add(0, 0, 2.0);
        t.add(0, 1, 1.0);
        let a = SymMatrix::from_triplets(&t);
        let bad = Ldlt::factor(a.clone(), &[1, 0], &|i| ["u", "p"][i].to_string());
        match bad {
            Err(LabError::Factorization { step, dof, .. }) => {
                assert!(step < 2);
                assert!(!dof.is_empty());
            }
            other => panic!("{other:?}"),
        }
        let ok = Ldlt::factor(a, &[0, 1], &|i| i.to_string()).unwrap();
        let x = ok.solve(&[3.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn amd_is_a_permutation() {
        let adj: Vec<Vec<usize>> = (0..20)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i < 19 {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        let mut p = amd_order(&adj).unwrap();
        p.sort_unstable();
        assert_eq!(p, (0..20).collect::<Vec<_>>());
    }
}
