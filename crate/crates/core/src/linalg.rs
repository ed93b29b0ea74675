//! Sparse storage and direct solvers.
//!
//! Operators on the structured meshes used here have a small bandwidth under
//! natural (row-major, component-interleaved) numbering, so the direct solver
//! is a banded LU with partial pivoting in LAPACK `gbtrf` layout.

use crate::error::{PodError, Result};

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            row.sort_unstable_by_key(|&(j, _)| j);
            for &(j, v) in &row {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    /// Same sparsity pattern as `self`, all values zero.
    pub fn zeros_like(&self) -> Self {
        Self { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterates `(col, value)` over the stored entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// Storage index of entry `(i, j)`, if it is part of the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        let cols = &self.col_idx[start..self.row_ptr[i + 1]];
        cols.binary_search(&j).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(out.len(), self.nrows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `xᵀ · self · y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        (0..self.nrows).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|` over the pattern.
    pub fn asymmetry(&self) -> f64 {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// `(lower, upper)` bandwidth of the stored pattern.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if j < i {
                    lower = lower.max(i - j);
                } else {
                    upper = upper.max(j - i);
                }
            }
        }
        (lower, upper)
    }

    /// Kronecker product `self ⊗ I_k`, interleaving `k` components per row.
    pub fn kron_identity(&self, k: usize) -> Self {
        if k == 1 {
            return self.clone();
        }
        let mut triplets = Vec::with_capacity(self.nnz() * k);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                for c in 0..k {
                    triplets.push((i * k + c, j * k + c, v));
                }
            }
        }
        Self::from_triplets(self.nrows * k, self.ncols * k, &triplets)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Row-major triplets of the stored entries.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }
}

/// Banded LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    /// Factorizes `Σ coef_k · mats_k`. All matrices must be square and of the same size.
    pub fn factor_combination(terms: &[(f64, &CsrMatrix)]) -> Result<Self> {
        let n = terms.first().map(|(_, m)| m.nrows()).unwrap_or(0);
        let (mut kl, mut ku) = (0, 0);
        for (_, m) in terms {
            if m.nrows() != n || m.ncols() != n {
                return Err(PodError::InvalidArgument(format!(
                    "matrix combination needs square {n}x{n} operands, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let (l, u) = m.bandwidth();
            kl = kl.max(l);
            ku = ku.max(u);
        }
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, ldab, ab: vec![0.0; ldab * n], ipiv: vec![0; n] };
        for &(coef, m) in terms {
            if coef == 0.0 {
                continue;
            }
            for i in 0..n {
                for (j, v) in m.row(i) {
                    let k = lu.idx(i, j);
                    lu.ab[k] += coef * v;
                }
            }
        }
        lu.factor_in_place()?;
        Ok(lu)
    }

    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        Self::factor_combination(&[(1.0, m)])
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.ku + self.kl;
        let ldab = self.ldab;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // (j + i, j) lives at diag + i
            let diag = j * ldab + kv;
            let mut p = 0;
            let mut best = self.ab[diag].abs();
            for i in 1..=km {
                let v = self.ab[diag + i].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.ipiv[j] = j + p;
            if best == 0.0 || !best.is_finite() {
                return Err(PodError::SingularMatrix { pivot: j });
            }
            ju = ju.max((j + self.ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    self.ab.swap(a, a + p);
                }
            }
            let pivot = self.ab[diag];
            for v in &mut self.ab[diag + 1..=diag + km] {
                *v /= pivot;
            }
            if km == 0 {
                continue;
            }
            let (head, tail) = self.ab.split_at_mut((j + 1) * ldab);
            let l = &head[diag + 1..=diag + km];
            for c in j + 1..=ju {
                // (j, c) relative to the start of column c
                let off = (c - j - 1) * ldab + kv + j - c;
                let ujc = tail[off];
                if ujc == 0.0 {
                    continue;
                }
                for (t, &li) in tail[off + 1..=off + km].iter_mut().zip(l) {
                    *t -= li * ujc;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kv = self.ku + self.kl;
        let ldab = self.ldab;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            let km = self.kl.min(n - 1 - j);
            if bj != 0.0 && km > 0 {
                let diag = j * ldab + kv;
                for (bi, &l) in b[j + 1..=j + km].iter_mut().zip(&self.ab[diag + 1..=diag + km]) {
                    *bi -= l * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let diag = j * ldab + kv;
            b[j] /= self.ab[diag];
            let bj = b[j];
            let top = j.saturating_sub(kv);
            if bj != 0.0 && top < j {
                let col = &self.ab[diag - (j - top)..diag];
                for (bi, &u) in b[top..j].iter_mut().zip(col) {
                    *bi -= u * bj;
                }
            }
        }
    }
}

/// Solver interface shared by the sparse and dense factorizations.
pub trait LinearSolve {
    fn solve_in_place(&self, b: &mut [f64]);
}

impl LinearSolve for BandedLu {
    fn solve_in_place(&self, b: &mut [f64]) {
        BandedLu::solve_in_place(self, b)
    }
}

/// Dense LU backed by nalgebra, used for reduced systems.
#[derive(Debug, Clone)]
pub struct DenseLu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>);

impl DenseLu {
    pub fn factor(m: nalgebra::DMatrix<f64>) -> Result<Self> {
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(PodError::SingularMatrix { pivot: 0 });
        }
        Ok(Self(lu))
    }
}

impl LinearSolve for DenseLu {
    fn solve_in_place(&self, b: &mut [f64]) {
        let mut v = nalgebra::DVectorViewMut::from_slice(b, b.len());
        let ok = self.0.solve_mut(&mut v);
        debug_assert!(ok);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
