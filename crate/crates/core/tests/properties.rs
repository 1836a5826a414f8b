//! Structural invariants over randomized coefficients and matrices.

use gmsfem::analysis::decompose_local;
use gmsfem::global::SpaceKind;
use gmsfem::pipeline::{build_all_snapshots, build_pod, build_spectral, solve_kind, solve_nested};
use gmsfem::sparse::{CsrMatrix, EnvelopeCholesky};
use gmsfem::{make_inclusions, Budgets, Inclusion, MeshHierarchy, Setup};
use proptest::prelude::*;

const SQUARE: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

fn disk_setup(center: [f64; 2], r: f64, contrast: f64) -> Setup {
    let mesh = MeshHierarchy::build(&SQUARE, 0.25, 3).unwrap();
    let kappa = make_inclusions(&mesh.fine, &[Inclusion::disk(center, r)], contrast).unwrap();
    let n = mesh.fine.num_cells();
    Setup::new(mesh, kappa, vec![1.0; n]).unwrap()
}

fn inclusion() -> impl Strategy<Value = ([f64; 2], f64, f64)> {
    (0.2..0.8f64, 0.2..0.8f64, 0.03..0.08f64, 0u32..7).prop_map(|(x, y, r, k)| ([x, y], r, 10f64.powi(k as i32)))
}

fn energy_gap(setup: &Setup, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    setup.fine.energy(&d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn envelope_cholesky_solves_banded_spd_systems(
        n in 5usize..60,
        band in 1usize..6,
        entries in prop::collection::vec(-1.0..1.0f64, 400),
        rhs in prop::collection::vec(-1.0..1.0f64, 60),
    ) {
        let mut trip = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i.saturating_sub(band)..i {
                let v = entries[k % entries.len()];
                k += 1;
                trip.push((i, j, v));
                trip.push((j, i, v));
            }
            trip.push((i, i, 2.0 * band as f64 + 1.0));
        }
        let a = CsrMatrix::from_triplets(n, n, &trip);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let b = &rhs[..n];
        let x = chol.solve(b);
        let ax = a.mul_vec(&x);
        for (p, q) in ax.iter().zip(b) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn partition_of_unity_sums_to_one_within_unit_interval((c, r, contrast) in inclusion()) {
        let setup = disk_setup(c, r, contrast);
        let sum = setup.pou.sum(setup.mesh.fine.num_nodes(), &setup.nbhds);
        for s in sum {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        for chi in &setup.pou.chi {
            for &v in chi {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
        prop_assert!(setup.weights.tilde.iter().all(|&t| t >= 0.0));
    }

    #[test]
    fn pod_spaces_are_nested_between_rank_one_and_snapshots((c, r, contrast) in inclusion()) {
        let setup = disk_setup(c, r, contrast);
        let snaps = build_all_snapshots(&setup).unwrap();
        let uh = &setup.fine.solution;
        let mut last = f64::INFINITY;
        let mut snap_error = 0.0;
        for ell in 1..=3 {
            let pods = build_pod(&setup, &snaps, &Budgets { pod: Some(ell), ..Budgets::default() }).unwrap();
            let (s, h) = solve_nested(&setup, &snaps, &pods).unwrap();
            let e = energy_gap(&setup, uh, &h.u);
            prop_assert!(e <= last * (1.0 + 1e-8), "rank {ell}: {e} after {last}");
            last = e;
            snap_error = energy_gap(&setup, uh, &s.u);
        }
        prop_assert!(snap_error <= last * (1.0 + 1e-8));
    }

    #[test]
    fn pythagorean_identity_holds_for_nested_solutions((c, r, contrast) in inclusion()) {
        let setup = disk_setup(c, r, contrast);
        let snaps = build_all_snapshots(&setup).unwrap();
        let pods = build_pod(&setup, &snaps, &Budgets { pod: Some(2), ..Budgets::default() }).unwrap();
        let (s, h) = solve_nested(&setup, &snaps, &pods).unwrap();
        let uh = &setup.fine.solution;
        let lhs = energy_gap(&setup, uh, &h.u).powi(2);
        let rhs = energy_gap(&setup, uh, &s.u).powi(2) + energy_gap(&setup, &s.u, &h.u).powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn spectral_solution_is_a_galerkin_projection((c, r, contrast) in inclusion()) {
        let setup = disk_setup(c, r, contrast);
        let bases = build_spectral(&setup, &Budgets { spectral: Some(3), steklov: Some(2), ..Budgets::default() }).unwrap();
        let (space, sol) = solve_kind(&setup, SpaceKind::S, &bases.members()).unwrap();
        prop_assert!(space.galerkin_defect(&setup.fine, &sol.u) < 1e-8);
    }

    #[test]
    fn local_decomposition_reassembles_the_reference_solution((c, r, contrast) in inclusion(), i in 0usize..25) {
        let setup = disk_setup(c, r, contrast);
        let d = decompose_local(&setup, i, &setup.fine.solution).unwrap();
        prop_assert!(d.defect < 1e-8, "defect {}", d.defect);
    }
}
