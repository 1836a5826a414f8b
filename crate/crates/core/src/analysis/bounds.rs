//! Explicit-constant inequalities, evaluated on concrete configurations.

use nalgebra::DVector;
use rayon::prelude::*;

use super::{decompose_local, diff, energy, source_norm, BoundCheck, Constants, Region, Weight};
use crate::error::Result;
use crate::fem::chi_weighted_energy;
use crate::global::SpaceKind;
use crate::pipeline::{build_all_snapshots, build_pod, build_spectral, pod_members, snapshot_members, solve_kind, Budgets, Setup, SpectralBases};
use crate::snapshots::{project_pod, snapshot_interpolant, PodBasis, SnapshotSpace};
use crate::sparse::CsrMatrix;
use crate::spectral::{project_spectral, project_steklov};

fn inv_sqrt(lambda: Option<f64>) -> f64 {
    match lambda {
        Some(l) if l > 0.0 => l.powf(-0.5),
        _ => 0.0,
    }
}

/// Local inequalities on neighborhood `i` at the ranks stored in `bases` and `pods`.
pub fn check_local_bounds(
    setup: &Setup,
    consts: &Constants,
    bases: &SpectralBases,
    snaps: &[SnapshotSpace],
    pods: &[PodBasis],
    i: usize,
    u_h: &[f64],
) -> Result<Vec<BoundCheck>> {
    let nb = &setup.nbhds[i];
    let sys = &setup.locals[i];
    let h = setup.coarse_size();
    let cp = consts.c_poin_local[i];
    let region = Region::Neighborhood(i);
    let u = setup.restrict(i, u_h);
    let u_a = energy(&sys.stiffness, &u);
    let f_tinv = source_norm(setup, Weight::TildeInv, region);
    let f_kinv = source_norm(setup, Weight::KappaInv, region);
    let l2t = |v: &[f64]| sys.mass_tilde.quad(v).max(0.0).sqrt();
    let s = u_a + l2t(&u) + f_tinv + f_kinv;
    let (ell_s, ell_t, ell_h) = (bases.ell_s[i], bases.ell_t[i], pods[i].rank);
    let check = |name, ell, lhs, rhs, scale, recorded| BoundCheck { name, nbhd: Some(i), ell, lhs, rhs, scale, recorded };
    let mut out = Vec::new();

    let parts = decompose_local(setup, i, u_h)?;
    let lam_s = bases.neumann[i].lambda(ell_s);
    let e1 = diff(&parts.interior, &project_spectral(&bases.neumann[i], &sys.mass_tilde, ell_s, &parts.interior)?);
    out.push(check("interior_l2", ell_s, l2t(&e1), lam_s.map_or(0.0, |l| f_tinv / l), s, false));
    out.push(check("interior_energy", ell_s, energy(&sys.stiffness, &e1), inv_sqrt(lam_s) * f_tinv, s, false));

    let apriori = u_a + h * cp.sqrt() * f_kinv;
    out.push(check("harmonic_apriori", 0, energy(&sys.stiffness, &parts.harmonic), apriori, s, false));
    let lam_t = inv_sqrt(bases.steklov[i].lambda(ell_t + 1));
    let e2 = diff(&parts.harmonic, &project_steklov(&bases.steklov[i], &sys.boundary_mass, ell_t, &parts.harmonic)?);
    let trace = sys.boundary_mass.quad(&e2).max(0.0).sqrt();
    out.push(check("steklov_trace", ell_t, trace, lam_t * apriori, s, false));
    out.push(check("steklov_interior_l2", ell_t, l2t(&e2), lam_t * apriori, s, true));
    let chi = &setup.pou.chi[i];
    let cacc = chi_weighted_energy(&nb.mesh, &sys.kappa, chi, &e2);
    let cacc_rhs = 8.0 / (h * h) * lam_t * lam_t * (u_a * u_a + h * h * cp * f_kinv * f_kinv);
    out.push(check("steklov_caccioppoli", ell_t, cacc, cacc_rhs, s * s, true));

    let snap = snapshot_interpolant(nb, &snaps[i], &u);
    let local_err = energy(&sys.stiffness, &diff(&u, &snap));
    out.push(check("snapshot_local_energy", 0, local_err, h * cp.sqrt() * f_kinv, s, false));
    let pod = &pods[i];
    let lam_h = inv_sqrt(pod.values.get(ell_h).copied());
    let e3 = diff(&snap, &project_pod(pod, &sys.mass_tilde, ell_h, &snap));
    let pod_rhs = 2f64.sqrt() * lam_h * (h * cp.sqrt() * f_kinv + u_a);
    out.push(check("pod_local_l2", ell_h, l2t(&e3), pod_rhs, s, false));
    let cacc3 = chi_weighted_energy(&nb.mesh, &sys.kappa, chi, &e3);
    let cacc3_rhs = 4.0 / (h * h) * sys.mass_tilde.quad(&e3).max(0.0);
    out.push(check("pod_caccioppoli", ell_h, cacc3, cacc3_rhs, s * s, false));
    Ok(out)
}

/// `Σ_i χ_i w_i` for local functions `w_i`, without boundary zeroing.
fn glue(setup: &Setup, local: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; setup.mesh.fine.num_nodes()];
    for (nb, w) in setup.nbhds.iter().zip(local) {
        for ((&g, &c), &v) in nb.nodes.iter().zip(&setup.pou.chi[nb.index]).zip(w) {
            out[g] += c * v;
        }
    }
    out
}

/// Global energy bounds for the snapshot and POD spaces.
pub fn check_global_bounds(
    setup: &Setup,
    consts: &Constants,
    snaps: &[SnapshotSpace],
    pods: &[PodBasis],
) -> Result<Vec<BoundCheck>> {
    let u_h = &setup.fine.solution;
    let h = setup.coarse_size();
    let a = &setup.fine.stiffness;
    let f_kinv = source_norm(setup, Weight::KappaInv, Region::Domain);
    let c_ov = consts.overlap as f64;
    let s = setup.fine.energy(u_h) + f_kinv;
    let ell = pods.iter().map(|p| p.rank).max().unwrap_or(0);
    let check = |name, lhs, rhs| BoundCheck { name, nbhd: None, ell, lhs, rhs, scale: s, recorded: false };

    let (_, snap_sol) = solve_kind(setup, SpaceKind::Snap, &snapshot_members(snaps))?;
    let (_, pod_sol) = solve_kind(setup, SpaceKind::H, &pod_members(pods))?;
    let local_snap: Vec<Vec<f64>> = (0..setup.nbhds.len())
        .into_par_iter()
        .map(|i| snapshot_interpolant(&setup.nbhds[i], &snaps[i], &setup.restrict(i, u_h)))
        .collect();
    let local_pod: Vec<Vec<f64>> = (0..setup.nbhds.len())
        .into_par_iter()
        .map(|i| project_pod(&pods[i], &setup.locals[i].mass_tilde, pods[i].rank, &local_snap[i]))
        .collect();
    let w_snap = glue(setup, &local_snap);
    let w_h = glue(setup, &local_pod);

    let worst = consts
        .c_poin_local
        .iter()
        .map(|&cp| consts.c0 * h * cp + cp.sqrt())
        .fold(0.0, f64::max);
    let b_snap = (2.0 * c_ov).sqrt() * h * worst * f_kinv;
    let lam = pods
        .iter()
        .map(|p| inv_sqrt(p.values.get(p.rank).copied()))
        .fold(0.0, f64::max);
    let c1 = h * consts.c_poin_max().sqrt() + 2.0 * setup.mesh.diam_domain * consts.c_poin_domain.sqrt();
    let b_pod = (20.0 * c_ov).sqrt() * lam / h * c1 * f_kinv;

    Ok(vec![
        check("snapshot_global_energy", energy(a, &diff(u_h, &snap_sol.u)), b_snap),
        check("snapshot_pou_energy", energy(a, &diff(u_h, &w_snap)), b_snap),
        check("pod_pou_gap", energy(a, &diff(&w_snap, &w_h)), b_pod),
        check("pod_global_energy", energy(a, &diff(u_h, &pod_sol.u)), b_snap + b_pod),
    ])
}

/// Runs the local and global checks at each uniform rank in `ells`.
pub fn inequality_suite(setup: &Setup, consts: &Constants, ells: &[usize]) -> Result<Vec<BoundCheck>> {
    let snaps = build_all_snapshots(setup)?;
    let mut out = Vec::new();
    for &ell in ells {
        let budgets = Budgets { spectral: Some(ell), steklov: Some(ell), pod: Some(ell), threshold: 1.0 };
        let bases = build_spectral(setup, &budgets)?;
        let pods = build_pod(setup, &snaps, &budgets)?;
        let local: Vec<Vec<BoundCheck>> = (0..setup.nbhds.len())
            .into_par_iter()
            .map(|i| check_local_bounds(setup, consts, &bases, &snaps, &pods, i, &setup.fine.solution))
            .collect::<Result<_>>()?;
        out.extend(local.into_iter().flatten());
        out.extend(check_global_bounds(setup, consts, &snaps, &pods)?);
    }
    Ok(out)
}

/// `‖v − P_ℓ v‖²_κ̃` computed on the fine grid, and the coefficient tail
/// `Σ_{j≥ℓ} c_j²` from the full eigendecomposition, for `v = Σ_k a_k φ_k`.
pub fn pod_truncation_errors(pod: &PodBasis, snap: &SnapshotSpace, mass_tilde: &CsrMatrix, ell: usize, a: &[f64]) -> (f64, f64) {
    let av = DVector::from_column_slice(a);
    let v: Vec<f64> = (&snap.phi * &av).iter().copied().collect();
    let e = diff(&v, &project_pod(pod, mass_tilde, ell, &v));
    let direct = mass_tilde.quad(&e);
    let c = pod.coeffs.transpose() * (&pod.s_off * av);
    let tail = c.iter().skip(ell).map(|x| x * x).sum();
    (direct, tail)
}
