//! Shared setup for a fixed mesh, coefficient and source, and the local
//! bases behind each global space.

use rayon::prelude::*;

use crate::coefficient::{compute_weights, CoefficientField, WeightField};
use crate::error::{Error, Result};
use crate::fem::{mass, FineProblem, LocalSystem};
use crate::global::{assemble_global, assemble_nested, CoarseSolution, GlobalSpace, SpaceKind};
use crate::mesh::{overlap_constant, MeshHierarchy, Neighborhood};
use crate::pou::{build_pou, PartitionOfUnity};
use crate::snapshots::{build_snapshots, pod_reduce, PodBasis, SnapshotSpace};
use crate::sparse::CsrMatrix;
use crate::spectral::{solve_corrector, solve_neumann_eig, solve_neumann_until, solve_steklov_eig, LocalBasisSet};

/// Everything that depends only on the mesh, `κ` and `f`.
#[derive(Debug, Clone)]
pub struct Setup {
    pub mesh: MeshHierarchy,
    pub kappa: CoefficientField,
    pub nbhds: Vec<Neighborhood>,
    pub pou: PartitionOfUnity,
    pub weights: WeightField,
    pub locals: Vec<LocalSystem>,
    pub fine: FineProblem,
    /// Global `M_κ̃`.
    pub mass_tilde: CsrMatrix,
    pub overlap: usize,
}

impl Setup {
    pub fn new(mesh: MeshHierarchy, kappa: CoefficientField, source: Vec<f64>) -> Result<Self> {
        if source.len() != mesh.fine.num_cells() {
            return Err(Error::Numerical("fem_core: source length differs from the fine cell count".into()));
        }
        let nbhds = mesh.neighborhoods();
        let pou = build_pou(&mesh, &kappa, &nbhds)?;
        let weights = compute_weights(mesh.coarse_size, &kappa, &pou.grad_sq_sum);
        let locals = nbhds
            .par_iter()
            .map(|nb| LocalSystem::new(nb, &kappa.values, &weights.tilde, &weights.tilde_inv))
            .collect();
        let fine = FineProblem::new(&mesh, &kappa.values, &source)?;
        let mass_tilde = mass(&mesh.fine, &weights.tilde);
        let overlap = overlap_constant(mesh.coarse.num_cells(), &nbhds);
        Ok(Self { mesh, kappa, nbhds, pou, weights, locals, fine, mass_tilde, overlap })
    }

    /// Restriction of a global fine vector to neighborhood `i`.
    pub fn restrict(&self, i: usize, u: &[f64]) -> Vec<f64> {
        self.nbhds[i].nodes.iter().map(|&g| u[g]).collect()
    }

    /// Cellwise source restricted to neighborhood `i`.
    pub fn local_source(&self, i: usize) -> Vec<f64> {
        self.nbhds[i].cells.iter().map(|&c| self.fine.source[c]).collect()
    }

    pub fn coarse_size(&self) -> f64 {
        self.mesh.coarse_size
    }

    pub fn assemble(&self, kind: SpaceKind, members: &[Vec<Vec<f64>>]) -> Result<GlobalSpace> {
        assemble_global(kind, &self.mesh, &self.nbhds, &self.pou, members, &self.fine.stiffness)
    }
}

/// Truncation budgets; `None` selects by the threshold `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budgets {
    /// `ℓ^I`, counting the constant.
    pub spectral: Option<usize>,
    /// `ℓ^II`.
    pub steklov: Option<usize>,
    /// POD rank `ℓ`.
    pub pod: Option<usize>,
    pub threshold: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { spectral: None, steklov: None, pod: None, threshold: 1.0 }
    }
}

/// Local bases of the spectral space.
#[derive(Debug, Clone)]
pub struct SpectralBases {
    pub neumann: Vec<LocalBasisSet>,
    pub steklov: Vec<LocalBasisSet>,
    pub correctors: Vec<Vec<f64>>,
    /// `ℓ_i^I`.
    pub ell_s: Vec<usize>,
    /// `ℓ_i^II`.
    pub ell_t: Vec<usize>,
}

impl SpectralBases {
    /// `{1, v_1..v_{ℓ^I−1}} ∪ {v^T_1..v^T_{ℓ^II}} ∪ {v^i}` per neighborhood.
    pub fn members(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.neumann.len())
            .map(|i| {
                let n = self.correctors[i].len();
                let mut m = vec![vec![1.0; n]];
                m.extend(self.neumann[i].vectors[..self.ell_s[i] - 1].iter().cloned());
                m.extend(self.steklov[i].vectors[..self.ell_t[i]].iter().cloned());
                m.push(self.correctors[i].clone());
                m
            })
            .collect()
    }

    /// `min_i λ^S_{ℓ_i^I}`.
    pub fn min_lambda_s(&self) -> f64 {
        self.neumann
            .iter()
            .zip(&self.ell_s)
            .filter_map(|(b, &l)| b.lambda(l))
            .fold(f64::INFINITY, f64::min)
    }

    /// `min_i λ^T_{ℓ_i^II+1}`.
    pub fn min_lambda_t(&self) -> f64 {
        self.steklov
            .iter()
            .zip(&self.ell_t)
            .filter_map(|(b, &l)| b.lambda(l + 1))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Builds the Neumann, Steklov and corrector bases for every neighborhood.
pub fn build_spectral(setup: &Setup, budgets: &Budgets) -> Result<SpectralBases> {
    let h2 = setup.coarse_size().powi(2);
    let target = budgets.threshold / h2;
    let per: Vec<(LocalBasisSet, LocalBasisSet, Vec<f64>, usize, usize)> = setup
        .nbhds
        .par_iter()
        .zip(setup.locals.par_iter())
        .map(|(nb, sys)| {
            let i = nb.index;
            let (neumann, ell_s) = match budgets.spectral {
                Some(l) => {
                    if l == 0 {
                        return Err(Error::Config("budgets: spectral budget must be at least 1".into()));
                    }
                    (solve_neumann_eig(i, sys, l)?, l)
                }
                None => {
                    let set = solve_neumann_until(i, sys, target, 8)?;
                    let l = (1..=set.len())
                        .find(|&l| set.lambda(l).is_some_and(|v| v >= target))
                        .unwrap_or(set.len());
                    (set, l)
                }
            };
            let ell_t = budgets.steklov.unwrap_or(ell_s);
            let nb_count = nb.boundary.len();
            if ell_t > nb_count {
                return Err(Error::Numerical(format!(
                    "local_spectral: neighborhood {i} has {nb_count} boundary nodes, steklov budget {ell_t} exceeds it"
                )));
            }
            let steklov = solve_steklov_eig(i, sys, nb_count, (ell_t + 1).min(nb_count))?;
            let corrector = solve_corrector(i, sys)?;
            Ok((neumann, steklov, corrector, ell_s, ell_t))
        })
        .collect::<Result<_>>()?;
    let mut out = SpectralBases { neumann: vec![], steklov: vec![], correctors: vec![], ell_s: vec![], ell_t: vec![] };
    for (n, t, c, ls, lt) in per {
        out.neumann.push(n);
        out.steklov.push(t);
        out.correctors.push(c);
        out.ell_s.push(ls);
        out.ell_t.push(lt);
    }
    Ok(out)
}

/// Snapshot spaces for every neighborhood.
pub fn build_all_snapshots(setup: &Setup) -> Result<Vec<SnapshotSpace>> {
    setup
        .nbhds
        .par_iter()
        .zip(setup.locals.par_iter())
        .map(|(nb, sys)| build_snapshots(nb, sys))
        .collect()
}

pub fn snapshot_members(snaps: &[SnapshotSpace]) -> Vec<Vec<Vec<f64>>> {
    snaps.iter().map(|s| (0..s.len()).map(|j| s.column(j)).collect()).collect()
}

/// POD bases with ranks from the budget or the threshold `λ_{ℓ+1} ≥ τ/H²`.
pub fn build_pod(setup: &Setup, snaps: &[SnapshotSpace], budgets: &Budgets) -> Result<Vec<PodBasis>> {
    let target = budgets.threshold / setup.coarse_size().powi(2);
    snaps
        .par_iter()
        .zip(setup.locals.par_iter())
        .map(|(s, sys)| {
            let mut pod = pod_reduce(s, sys, budgets.pod.unwrap_or(1).min(s.len()).max(1))?;
            match budgets.pod {
                Some(l) if l > s.len() => {
                    return Err(Error::Numerical(format!(
                        "snapshots_pod: neighborhood {} has {} snapshots, POD budget {l} exceeds it",
                        s.nbhd,
                        s.len()
                    )))
                }
                Some(l) => pod.rank = l,
                None => pod.rank = pod.rank_for(target),
            }
            Ok(pod)
        })
        .collect()
}

pub fn pod_members(pods: &[PodBasis]) -> Vec<Vec<Vec<f64>>> {
    pods.iter().map(|p| (0..p.rank).map(|j| p.vector(j)).collect()).collect()
}

/// `min_i λ^H_{ℓ_i+1}`; infinite when every rank is full.
pub fn min_lambda_pod(pods: &[PodBasis]) -> f64 {
    pods.iter()
        .filter_map(|p| p.values.get(p.rank).copied())
        .fold(f64::INFINITY, f64::min)
}

/// Solves one kind end to end.
pub fn solve_kind(setup: &Setup, kind: SpaceKind, members: &[Vec<Vec<f64>>]) -> Result<(GlobalSpace, CoarseSolution)> {
    let space = setup.assemble(kind, members)?;
    let sol = space.solve_coarse(&setup.fine)?;
    Ok((space, sol))
}

/// SNAP and H solutions from one factorization with the POD members
/// eliminated first, so the H space kept is a subspace of the SNAP space kept.
pub fn solve_nested(setup: &Setup, snaps: &[SnapshotSpace], pods: &[PodBasis]) -> Result<(CoarseSolution, CoarseSolution)> {
    let lead: Vec<usize> = pods.iter().map(|p| p.rank).collect();
    let members: Vec<Vec<Vec<f64>>> = pod_members(pods)
        .into_iter()
        .zip(snapshot_members(snaps))
        .map(|(mut m, s)| {
            m.extend(s);
            m
        })
        .collect();
    let space = assemble_nested(SpaceKind::Snap, &setup.mesh, &setup.nbhds, &setup.pou, &members, &setup.fine.stiffness, &lead)?;
    let snap = space.solve_coarse(&setup.fine)?;
    let mut pod = space.solve_leading(&setup.fine)?;
    pod.kind = SpaceKind::H;
    Ok((snap, pod))
}
