//! Closed-form reference values checked against the discrete pipeline.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use gmsfem::analysis::{appendix_stability_sweep, dirichlet_min_eigenvalue, Trace};
use gmsfem::fem::{FineProblem, LocalSystem};
use gmsfem::mesh::{disk_mesh, rectangle_mesh};
use gmsfem::spectral::{solve_neumann_eig, solve_steklov_eig};
use gmsfem::{CoefficientField, MeshHierarchy, Neighborhood, Setup};

const SQUARE: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

fn unit_setup(h: f64, levels: usize, f: impl Fn([f64; 2]) -> f64) -> Setup {
    let mesh = MeshHierarchy::build(&SQUARE, h, levels).unwrap();
    let kappa = CoefficientField::constant(mesh.fine.num_cells(), 1.0);
    let source = (0..mesh.fine.num_cells()).map(|c| f(mesh.fine.centroid(c))).collect();
    Setup::new(mesh, kappa, source).unwrap()
}

/// Nodal error of the fine solver for `u = sin(πx) sin(πy)`.
fn manufactured_error(levels: usize) -> f64 {
    let mesh = MeshHierarchy::build(&SQUARE, 0.5, levels).unwrap();
    let kappa = vec![1.0; mesh.fine.num_cells()];
    let f: Vec<f64> = (0..mesh.fine.num_cells())
        .map(|c| {
            let p = mesh.fine.centroid(c);
            2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin()
        })
        .collect();
    let fine = FineProblem::new(&mesh, &kappa, &f).unwrap();
    mesh.fine
        .nodes
        .iter()
        .zip(&fine.solution)
        .map(|(p, u)| (u - (PI * p[0]).sin() * (PI * p[1]).sin()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn fine_solver_converges_quadratically_on_a_smooth_solution() {
    let coarse = manufactured_error(4);
    let fine = manufactured_error(5);
    assert!(coarse < 5e-3, "nodal error {coarse}");
    assert!(coarse / fine > 3.0, "error ratio {}", coarse / fine);
}

#[test]
fn dirichlet_laplacian_on_the_square_has_lowest_eigenvalue_two_pi_squared() {
    let mesh = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 64, 64);
    let fixed = mesh.boundary_nodes();
    let kappa = vec![1.0; mesh.num_cells()];
    let lam = dirichlet_min_eigenvalue(&mesh, &kappa, &fixed, 3).unwrap();
    assert_relative_eq!(lam, 2.0 * PI * PI, max_relative = 5e-3);
}

#[test]
fn neumann_problem_with_weight_four_matches_the_cosine_modes() {
    let mesh = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 32, 32);
    let m = mesh.num_cells();
    let nb = Neighborhood::from_mesh(mesh);
    let sys = LocalSystem::new(&nb, &vec![1.0; m], &vec![4.0; m], &vec![0.25; m]);
    let set = solve_neumann_eig(0, &sys, 5).unwrap();
    // (m, n) = (1,0), (0,1), (1,1), (2,0), (0,2)
    let exact = [1.0, 1.0, 2.0, 4.0, 4.0].map(|s| PI * PI * s / 4.0);
    for (j, e) in exact.iter().enumerate() {
        assert_relative_eq!(set.lambda(j + 1).unwrap(), *e, max_relative = 2e-2);
    }
}

#[test]
fn steklov_problem_on_the_unit_disk_has_integer_eigenvalues() {
    let mesh = disk_mesh(1.0, 24);
    let m = mesh.num_cells();
    let nb = Neighborhood::from_mesh(mesh);
    let sys = LocalSystem::new(&nb, &vec![1.0; m], &vec![1.0; m], &vec![1.0; m]);
    let set = solve_steklov_eig(0, &sys, nb.boundary.len(), 5).unwrap();
    assert!(set.values[0].abs() < 1e-8);
    for (v, e) in set.values[1..].iter().zip([1.0, 1.0, 2.0, 2.0]) {
        assert_relative_eq!(*v, e, max_relative = 5e-2);
    }
}

#[test]
fn constant_trace_ratio_is_the_square_root_of_weight_over_perimeter() {
    let h = 0.25;
    let setup = unit_setup(h, 2, |_| 1.0);
    // Interior coarse node (2, 2); its neighborhood holds six right triangles.
    let i = 2 * 5 + 2;
    let (rows, _) = appendix_stability_sweep(&setup, i, &[1.0], 0, 0, 0).unwrap();
    let row = rows.iter().find(|r| r.trace == Trace::Constant).unwrap();
    let area = 3.0 * h * h;
    let perimeter = (4.0 + 2.0 * 2f64.sqrt()) * h;
    assert_relative_eq!(row.ratio, (4.0 * area / perimeter).sqrt(), max_relative = 1e-10);
}

#[test]
fn unit_conductivity_gives_hat_functions_and_weight_four() {
    let setup = unit_setup(0.25, 3, |_| 1.0);
    let coarse = &setup.mesh.coarse;
    for nb in &setup.nbhds {
        let chi = &setup.pou.chi[nb.index];
        for (l, &g) in nb.nodes.iter().enumerate() {
            let p = setup.mesh.fine.nodes[g];
            let c = coarse.nodes[nb.index];
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            let hat = (1.0 - dx.abs().max(dy.abs()).max((dx - dy).abs()) / 0.25).max(0.0);
            assert!((chi[l] - hat).abs() < 1e-12, "nbhd {} node {g}: {} vs {hat}", nb.index, chi[l]);
        }
    }
    for &t in &setup.weights.tilde {
        assert_relative_eq!(t, 4.0, max_relative = 1e-12);
    }
}
