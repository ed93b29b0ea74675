//! POD in the H¹₀ inner product by the method of snapshots.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{PodError, Result};
use crate::fem::AssembledOperators;
use crate::linalg::{axpy, dot};
use crate::snapshots::SnapshotSet;

pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// `K_ij = (1/N) y_iᵀ A y_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub entries: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

pub fn correlation_matrix(snaps: &SnapshotSet, ops: &AssembledOperators) -> Result<CorrelationMatrix> {
    correlation_of(&snaps.vectors, ops)
}

fn correlation_of(vectors: &[Vec<f64>], ops: &AssembledOperators) -> Result<CorrelationMatrix> {
    let n = vectors.len();
    if n == 0 {
        return Err(PodError::invalid("no snapshots"));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != ops.dim()) {
        return Err(PodError::invalid(format!("snapshot length {} but operators act on {}", v.len(), ops.dim())));
    }
    let ay: Vec<Vec<f64>> = vectors.iter().map(|y| ops.stiffness.mul_vec(y)).collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            // average the two evaluation orders so the result is symmetric to the last bit
            let v = 0.5 * (dot(&vectors[i], &ay[j]) + dot(&vectors[j], &ay[i])) / n as f64;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(CorrelationMatrix { entries: k })
}

/// A-orthonormal POD modes with their eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// Retained eigenvalues, descending.
    pub lambdas: Vec<f64>,
    /// Every eigenvalue of the correlation matrix, descending, including the truncated ones.
    pub spectrum: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub n_snapshots: usize,
    pub rank_tol: f64,
}

impl PodBasis {
    /// Numerical rank `d_r`.
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.basis[0].len()
    }

    /// `Σ_{k>r} λ_k` over the whole spectrum (negative round-off eigenvalues count as zero).
    pub fn tail(&self, r: usize) -> f64 {
        self.spectrum.iter().skip(r).map(|l| l.max(0.0)).sum()
    }

    pub fn eigenvalue_sum(&self) -> f64 {
        self.tail(0)
    }

    fn check_r(&self, r: usize) -> Result<()> {
        if r == 0 || r > self.rank() {
            return Err(PodError::invalid(format!("r = {r} outside 1..={}", self.rank())));
        }
        Ok(())
    }

    /// `Φ_rᵀ A w`.
    pub fn coefficients(&self, r: usize, w: &[f64], ops: &AssembledOperators) -> Result<Vec<f64>> {
        self.check_r(r)?;
        if w.len() != self.dim() {
            return Err(PodError::invalid(format!("vector length {} but basis has {}", w.len(), self.dim())));
        }
        let aw = ops.stiffness.mul_vec(w);
        Ok(self.basis[..r].iter().map(|phi| dot(phi, &aw)).collect())
    }

    /// `Φ_r α`.
    pub fn combine(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.is_empty() || alpha.len() > self.rank() {
            return Err(PodError::invalid(format!("{} coefficients for a basis of rank {}", alpha.len(), self.rank())));
        }
        let mut out = vec![0.0; self.dim()];
        for (a, phi) in alpha.iter().zip(&self.basis) {
            axpy(*a, phi, &mut out);
        }
        Ok(out)
    }

    /// H¹₀-orthogonal projection `P^r w = Φ_r Φ_rᵀ A w`.
    pub fn project(&self, r: usize, w: &[f64], ops: &AssembledOperators) -> Result<Vec<f64>> {
        let c = self.coefficients(r, w, ops)?;
        self.combine(&c)
    }

    /// `max |(ΦᵀAΦ − I)_ij|`.
    pub fn orthonormality_defect(&self, ops: &AssembledOperators) -> f64 {
        let aphi: Vec<Vec<f64>> = self.basis.iter().map(|p| ops.stiffness.mul_vec(p)).collect();
        let mut worst = 0.0f64;
        for (i, p) in self.basis.iter().enumerate() {
            for (j, q) in aphi.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(p, q) - target).abs());
            }
        }
        worst
    }
}

/// Eigen-decomposes `K` and forms `φ_k = Σ_j v_k^j y_j / √(N λ_k)` for `λ_k > rank_tol · λ_1`.
///
/// The modes are re-orthonormalized in the A inner product by two passes of modified
/// Gram–Schmidt, which removes the round-off amplified by `1/√λ_k` for small eigenvalues.
pub fn compute_pod_basis(
    k: &CorrelationMatrix,
    snaps: &SnapshotSet,
    ops: &AssembledOperators,
    rank_tol: f64,
) -> Result<PodBasis> {
    pod_from_vectors(k, &snaps.vectors, ops, rank_tol)
}

/// Convenience wrapper computing the correlation matrix first.
pub fn pod(snaps: &SnapshotSet, ops: &AssembledOperators, rank_tol: f64) -> Result<PodBasis> {
    let k = correlation_matrix(snaps, ops)?;
    compute_pod_basis(&k, snaps, ops, rank_tol)
}

fn pod_from_vectors(
    k: &CorrelationMatrix,
    vectors: &[Vec<f64>],
    ops: &AssembledOperators,
    rank_tol: f64,
) -> Result<PodBasis> {
    let n = k.n();
    if n != vectors.len() {
        return Err(PodError::invalid(format!("correlation matrix is {n}×{n} for {} snapshots", vectors.len())));
    }
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(PodError::invalid(format!("rank tolerance must lie in (0, 1), got {rank_tol}")));
    }
    let eig = SymmetricEigen::new(k.entries.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lead = spectrum[0];
    if !(lead > 0.0) {
        return Err(PodError::EmptyBasis);
    }
    let kept: Vec<usize> = order.iter().copied().filter(|&i| eig.eigenvalues[i] > rank_tol * lead).collect();
    let lambdas: Vec<f64> = kept.iter().map(|&i| eig.eigenvalues[i]).collect();

    let mut basis = Vec::with_capacity(kept.len());
    for (&i, &l) in kept.iter().zip(&lambdas) {
        let mut phi = vec![0.0; ops.dim()];
        for (j, y) in vectors.iter().enumerate() {
            axpy(eig.eigenvectors[(j, i)], y, &mut phi);
        }
        let s = 1.0 / (n as f64 * l).sqrt();
        phi.iter_mut().for_each(|x| *x *= s);
        basis.push(phi);
    }
    for _ in 0..2 {
        a_gram_schmidt(&mut basis, ops);
    }
    Ok(PodBasis { lambdas, spectrum, basis, n_snapshots: n, rank_tol })
}

fn a_gram_schmidt(basis: &mut [Vec<f64>], ops: &AssembledOperators) {
    for i in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(i);
        let v = &mut rest[0];
        for q in done.iter() {
            let c = ops.h1_inner(q, v);
            axpy(-c, q, v);
        }
        let norm = ops.h1_inner(v, v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Smallest `r ≥ 1` with `Σ_{k>r} λ_k ≤ threshold`.
pub fn select_r(lambdas: &[f64], threshold: f64) -> Result<usize> {
    if lambdas.is_empty() {
        return Err(PodError::invalid("no eigenvalues"));
    }
    if !(threshold > 0.0) {
        return Err(PodError::invalid(format!("threshold must be positive, got {threshold}")));
    }
    let mut tail: f64 = lambdas[1..].iter().sum();
    let mut r = 1;
    while r < lambdas.len() && tail > threshold {
        tail -= lambdas[r];
        r += 1;
    }
    Ok(r)
}

/// `(1/N) Σ_j ‖∇(y_j − P^r y_j)‖₀²` evaluated directly from the snapshots.
pub fn mean_projection_error(basis: &PodBasis, r: usize, snaps: &SnapshotSet, ops: &AssembledOperators) -> Result<f64> {
    let mut total = 0.0;
    for y in &snaps.vectors {
        let p = basis.project(r, y, ops)?;
        let e: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
        total += ops.stiffness.bilinear(&e, &e);
    }
    Ok(total / snaps.len() as f64)
}
