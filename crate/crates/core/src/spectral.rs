//! Local spectral bases: the `κ̃`-weighted Neumann problem, the Steklov
//! problem and the corrector `v^i`.

use crate::eigen;
use crate::error::{Error, Result};
use crate::fem::LocalSystem;
use crate::sparse::{axpy, dot, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Neumann problem with weight `κ̃`.
    S,
    /// Steklov problem.
    T,
}

/// Local eigenpairs of one neighborhood.
///
/// For kind `S` the constant is kept apart: `values[j]` and `vectors[j]`
/// are `λ_{j+1}` and `v_{j+1}`, the nonzero eigenpairs, `κ̃`-orthonormal and
/// `κ̃`-mean-zero. For kind `T` they are `λ_{j+1}, v_{j+1}` starting with the
/// constant (`λ₁ = 0`), orthonormal on the boundary.
#[derive(Debug, Clone)]
pub struct LocalBasisSet {
    pub nbhd: usize,
    pub kind: BasisKind,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `∫κ̃` for kind `S`, `|∂ω|` for kind `T`.
    pub weight_total: f64,
}

impl LocalBasisSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `λ_j` with the paper-style one-based index.
    ///
    /// For kind `S` index 1 is the first nonzero eigenvalue.
    pub fn lambda(&self, j: usize) -> Option<f64> {
        j.checked_sub(1).and_then(|k| self.values.get(k).copied())
    }
}

fn seed_for(nbhd: usize, kind: BasisKind) -> u64 {
    (nbhd as u64) << 2 | if kind == BasisKind::S { 1 } else { 2 }
}

/// The `count` smallest nonzero eigenpairs of `A v = λ M_κ̃ v`.
pub fn solve_neumann_eig(nbhd: usize, sys: &LocalSystem, count: usize) -> Result<LocalBasisSet> {
    let n = sys.stiffness.nrows();
    if count + 1 > n {
        return Err(Error::Numerical(format!(
            "local_spectral: neighborhood {nbhd} has {n} nodes, {count} neumann eigenpairs requested"
        )));
    }
    let pairs = eigen::smallest(&sys.stiffness, &sys.mass_tilde, count + 1, seed_for(nbhd, BasisKind::S))
        .map_err(|e| Error::Numerical(format!("local_spectral: neighborhood {nbhd}: {e}")))?;
    let one = vec![1.0; n];
    let m_one = sys.mass_tilde.mul_vec(&one);
    let total: f64 = m_one.iter().sum();
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for (lam, mut v) in pairs.values.into_iter().zip(pairs.vectors).skip(1) {
        let mean = dot(&v, &m_one) / total;
        axpy(&mut v, -mean, &one);
        let nrm = sys.mass_tilde.quad(&v).sqrt();
        v.iter_mut().for_each(|x| *x /= nrm);
        values.push(lam);
        vectors.push(v);
    }
    Ok(LocalBasisSet { nbhd, kind: BasisKind::S, values, vectors, weight_total: sys.tilde_total })
}

/// Neumann eigenpairs until `λ_count ≥ target` or the space is exhausted.
pub fn solve_neumann_until(nbhd: usize, sys: &LocalSystem, target: f64, start: usize) -> Result<LocalBasisSet> {
    let cap = sys.stiffness.nrows() - 1;
    let mut count = start.clamp(1, cap);
    loop {
        let set = solve_neumann_eig(nbhd, sys, count)?;
        if set.values.last().is_some_and(|l| *l >= target) || count == cap {
            return Ok(set);
        }
        count = (2 * count).min(cap);
    }
}

/// The `count` smallest eigenpairs of `A v = λ B v`.
pub fn solve_steklov_eig(nbhd: usize, sys: &LocalSystem, boundary_nodes: usize, count: usize) -> Result<LocalBasisSet> {
    if count > boundary_nodes {
        return Err(Error::Numerical(format!(
            "local_spectral: neighborhood {nbhd} has {boundary_nodes} boundary nodes, {count} steklov eigenpairs requested"
        )));
    }
    let pairs = eigen::smallest(&sys.stiffness, &sys.boundary_mass, count, seed_for(nbhd, BasisKind::T))
        .map_err(|e| Error::Numerical(format!("local_spectral: neighborhood {nbhd}: {e}")))?;
    Ok(LocalBasisSet {
        nbhd,
        kind: BasisKind::T,
        values: pairs.values,
        vectors: pairs.vectors,
        weight_total: sys.boundary_length,
    })
}

/// Right-hand side of the corrector problem: `κ̃/∫κ̃` inside and flux
/// `−|∂ω|⁻¹` on the boundary.
pub fn corrector_rhs(sys: &LocalSystem) -> Vec<f64> {
    let n = sys.stiffness.nrows();
    let one = vec![1.0; n];
    let mut b = sys.mass_tilde.mul_vec(&one);
    b.iter_mut().for_each(|x| *x /= sys.tilde_total);
    let bnd = sys.boundary_mass.mul_vec(&one);
    axpy(&mut b, -1.0 / sys.boundary_length, &bnd);
    b
}

/// The corrector `v^i`, normalized to zero `κ̃`-mean.
pub fn solve_corrector(nbhd: usize, sys: &LocalSystem) -> Result<Vec<f64>> {
    if !(sys.tilde_total > 0.0) {
        return Err(Error::Numerical(format!("local_spectral: neighborhood {nbhd} has zero weight mass")));
    }
    sys.neumann()
        .and_then(|s| s.solve(&corrector_rhs(sys)))
        .map_err(|e| Error::Numerical(format!("local_spectral: neighborhood {nbhd}: {e}")))
}

/// `c₀(v,1) + Σ_{j<ℓ} (v, v_j) v_j` in the `κ̃` inner product.
pub fn project_spectral(basis: &LocalBasisSet, mass_tilde: &CsrMatrix, ell: usize, v: &[f64]) -> Result<Vec<f64>> {
    if basis.kind != BasisKind::S || ell == 0 || ell - 1 > basis.len() {
        return Err(Error::Numerical(format!(
            "local_spectral: projection rank {ell} outside 1..={} in neighborhood {}",
            basis.len() + 1,
            basis.nbhd
        )));
    }
    let mv = mass_tilde.mul_vec(v);
    let c = mv.iter().sum::<f64>() / basis.weight_total;
    let mut out = vec![c; v.len()];
    for q in &basis.vectors[..ell - 1] {
        axpy(&mut out, dot(&mv, q), q);
    }
    Ok(out)
}

/// `Σ_{j≤ℓ} (v, v_j)_∂ω v_j`, extended by the stored eigenfunctions.
pub fn project_steklov(basis: &LocalBasisSet, boundary_mass: &CsrMatrix, ell: usize, v: &[f64]) -> Result<Vec<f64>> {
    if basis.kind != BasisKind::T || ell > basis.len() {
        return Err(Error::Numerical(format!(
            "local_spectral: steklov rank {ell} exceeds {} in neighborhood {}",
            basis.len(),
            basis.nbhd
        )));
    }
    let bv = boundary_mass.mul_vec(v);
    let mut out = vec![0.0; v.len()];
    for q in &basis.vectors[..ell] {
        axpy(&mut out, dot(&bv, q), q);
    }
    Ok(out)
}
