//! `κ`-harmonic snapshot spaces and their POD reduction.

use nalgebra::{DMatrix, DVector};

use crate::eigen::dense_full;
use crate::error::{Error, Result};
use crate::fem::LocalSystem;
use crate::mesh::Neighborhood;
use crate::sparse::CsrMatrix;

/// Harmonic extensions of the boundary fine-node hats of one neighborhood.
///
/// Hats sit only at boundary nodes off the domain boundary, so every
/// snapshot vanishes on `∂D`.
#[derive(Debug, Clone)]
pub struct SnapshotSpace {
    pub nbhd: usize,
    /// Positions in `Neighborhood::boundary` carrying a hat.
    pub data: Vec<usize>,
    /// Column `j` is `φ_j` on the local nodes, for the hat at `data[j]`.
    pub phi: DMatrix<f64>,
}

impl SnapshotSpace {
    pub fn len(&self) -> usize {
        self.phi.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.ncols() == 0
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.phi.column(j).iter().copied().collect()
    }
}

/// Solves one local Dirichlet problem per boundary node.
pub fn build_snapshots(nb: &Neighborhood, sys: &LocalSystem) -> Result<SnapshotSpace> {
    let solver = sys
        .dirichlet(nb)
        .map_err(|e| Error::Numerical(format!("snapshots_pod: neighborhood {}: {e}", nb.index)))?;
    let n = nb.num_nodes();
    let data: Vec<usize> = (0..nb.boundary.len()).filter(|&k| !nb.on_domain_boundary[k]).collect();
    let zero = vec![0.0; n];
    let mut phi = DMatrix::zeros(n, data.len());
    let mut values = vec![0.0; nb.boundary.len()];
    for (j, &k) in data.iter().enumerate() {
        values[k] = 1.0;
        let u = solver.solve(&zero, &values)?;
        values[k] = 0.0;
        phi.set_column(j, &DVector::from_vec(u));
    }
    Ok(SnapshotSpace { nbhd: nb.index, data, phi })
}

/// `Φᵀ S Φ` for a sparse `S`.
pub fn galerkin(s: &CsrMatrix, phi: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sphi = DMatrix::zeros(phi.nrows(), phi.ncols());
    for j in 0..phi.ncols() {
        let col: Vec<f64> = phi.column(j).iter().copied().collect();
        sphi.set_column(j, &DVector::from_vec(s.mul_vec(&col)));
    }
    let g = phi.transpose() * sphi;
    (&g + g.transpose()) * 0.5
}

/// Eigenpairs of `A^off v = λ S^off v` over a snapshot space.
#[derive(Debug, Clone)]
pub struct PodBasis {
    pub nbhd: usize,
    /// All `L` eigenvalues, nondecreasing.
    pub values: Vec<f64>,
    /// `S^off`-orthonormal coefficient vectors as columns.
    pub coeffs: DMatrix<f64>,
    /// `v_j = Σ_k (v_j)_k φ_k` on the local nodes, as columns.
    pub vectors: DMatrix<f64>,
    pub a_off: DMatrix<f64>,
    pub s_off: DMatrix<f64>,
    pub rank: usize,
}

/// Builds the full POD eigendecomposition and keeps rank `ell`.
pub fn pod_reduce(snap: &SnapshotSpace, sys: &LocalSystem, ell: usize) -> Result<PodBasis> {
    let l = snap.len();
    if ell == 0 || ell > l {
        return Err(Error::Numerical(format!(
            "snapshots_pod: neighborhood {} has {l} snapshots, rank {ell} requested",
            snap.nbhd
        )));
    }
    let a_off = galerkin(&sys.stiffness, &snap.phi);
    let s_off = galerkin(&sys.mass_tilde, &snap.phi);
    let (values, coeffs) = dense_full(&a_off, &s_off)
        .map_err(|e| Error::Numerical(format!("snapshots_pod: neighborhood {}: {e}", snap.nbhd)))?;
    let vectors = &snap.phi * &coeffs;
    Ok(PodBasis { nbhd: snap.nbhd, values, coeffs, vectors, a_off, s_off, rank: ell })
}

impl PodBasis {
    /// Smallest `ℓ` with `λ_{ℓ+1} ≥ target`, or `L`.
    pub fn rank_for(&self, target: f64) -> usize {
        (1..self.values.len())
            .find(|&l| self.values[l] >= target)
            .unwrap_or(self.values.len())
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.column(j).iter().copied().collect()
    }

    /// `(v, v_j)_κ̃` for all `j`.
    pub fn coefficients(&self, mass_tilde: &CsrMatrix, v: &[f64]) -> Vec<f64> {
        let mv = DVector::from_vec(mass_tilde.mul_vec(v));
        (self.vectors.transpose() * mv).iter().copied().collect()
    }
}

/// `Σ_{j≤ℓ} (v, v_j)_κ̃ v_j`.
pub fn project_pod(pod: &PodBasis, mass_tilde: &CsrMatrix, ell: usize, v: &[f64]) -> Vec<f64> {
    let c = pod.coefficients(mass_tilde, v);
    let mut out = DVector::zeros(v.len());
    for (j, cj) in c.iter().enumerate().take(ell) {
        out += pod.vectors.column(j) * *cj;
    }
    out.iter().copied().collect()
}

/// The snapshot-space member with the trace of `u` on the neighborhood
/// boundary; `u` is taken to vanish on the domain boundary.
pub fn snapshot_interpolant(nb: &Neighborhood, snap: &SnapshotSpace, u_local: &[f64]) -> Vec<f64> {
    let trace = DVector::from_iterator(snap.data.len(), snap.data.iter().map(|&k| u_local[nb.boundary[k]]));
    (&snap.phi * trace).iter().copied().collect()
}
