//! P1 assembly and the linear solves built on it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{dist, MeshHierarchy, Neighborhood, TriMesh};
use crate::sparse::{dot, CsrMatrix, EnvelopeCholesky};

/// Stiffness matrix `∫ κ ∇φ_m·∇φ_n` for a cellwise constant `κ`.
pub fn stiffness(mesh: &TriMesh, kappa: &[f64]) -> CsrMatrix {
    assert_eq!(kappa.len(), mesh.num_cells());
    let trip: Vec<(usize, usize, f64)> = (0..mesh.num_cells())
        .into_par_iter()
        .flat_map_iter(|c| {
            let g = mesh.hat_gradients(c);
            let s = kappa[c] * mesh.area(c);
            let t = mesh.cells[c];
            (0..9).map(move |k| {
                let (a, b) = (k / 3, k % 3);
                (t[a], t[b], s * (g[a][0] * g[b][0] + g[a][1] * g[b][1]))
            })
        })
        .collect();
    CsrMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), &trip)
}

/// Consistent mass matrix `∫ w φ_m φ_n` for a cellwise constant weight.
pub fn mass(mesh: &TriMesh, w: &[f64]) -> CsrMatrix {
    assert_eq!(w.len(), mesh.num_cells());
    let trip: Vec<(usize, usize, f64)> = (0..mesh.num_cells())
        .into_par_iter()
        .flat_map_iter(|c| {
            let s = w[c] * mesh.area(c) / 12.0;
            let t = mesh.cells[c];
            (0..9).map(move |k| {
                let (a, b) = (k / 3, k % 3);
                (t[a], t[b], if a == b { 2.0 * s } else { s })
            })
        })
        .collect();
    CsrMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), &trip)
}

/// Consistent boundary mass `∫_∂ φ_m φ_n ds` over the given edges.
pub fn boundary_mass(mesh: &TriMesh, edges: &[[usize; 2]]) -> CsrMatrix {
    let mut trip = Vec::with_capacity(4 * edges.len());
    for e in edges {
        let len = dist(mesh.nodes[e[0]], mesh.nodes[e[1]]);
        trip.push((e[0], e[0], len / 3.0));
        trip.push((e[1], e[1], len / 3.0));
        trip.push((e[0], e[1], len / 6.0));
        trip.push((e[1], e[0], len / 6.0));
    }
    CsrMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), &trip)
}

/// Load vector `∫ f φ_m` for a cellwise constant `f`.
pub fn load(mesh: &TriMesh, f: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_nodes()];
    for (c, t) in mesh.cells.iter().enumerate() {
        let s = f[c] * mesh.area(c) / 3.0;
        for &v in t {
            b[v] += s;
        }
    }
    b
}

/// `∫ w` over the mesh for a cellwise constant weight.
pub fn integrate_cells(mesh: &TriMesh, w: &[f64]) -> f64 {
    (0..mesh.num_cells()).map(|c| w[c] * mesh.area(c)).sum()
}

/// Cellwise gradient of a P1 function.
pub fn gradient(mesh: &TriMesh, u: &[f64], c: usize) -> [f64; 2] {
    let g = mesh.hat_gradients(c);
    let t = mesh.cells[c];
    let mut out = [0.0; 2];
    for k in 0..3 {
        out[0] += u[t[k]] * g[k][0];
        out[1] += u[t[k]] * g[k][1];
    }
    out
}

/// Exact `∫ w u v` for P1 functions and a cellwise constant weight.
pub fn weighted_product(mesh: &TriMesh, w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (c, t) in mesh.cells.iter().enumerate() {
        let (a, b) = ([u[t[0]], u[t[1]], u[t[2]]], [v[t[0]], v[t[1]], v[t[2]]]);
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                q += a[i] * b[j] * if i == j { 2.0 } else { 1.0 };
            }
        }
        s += w[c] * mesh.area(c) * q / 12.0;
    }
    s
}

/// Exact `∫ χ² κ |∇e|²` for P1 `χ`, `e` and cellwise constant `κ`.
pub fn chi_weighted_energy(mesh: &TriMesh, kappa: &[f64], chi: &[f64], e: &[f64]) -> f64 {
    let mut s = 0.0;
    for (c, t) in mesh.cells.iter().enumerate() {
        let g = gradient(mesh, e, c);
        let (a, b, d) = (chi[t[0]], chi[t[1]], chi[t[2]]);
        let chi2 = mesh.area(c) / 6.0 * (a * a + b * b + d * d + a * b + b * d + a * d);
        s += kappa[c] * (g[0] * g[0] + g[1] * g[1]) * chi2;
    }
    s
}

/// Solves `A u = b` with `u` prescribed on `fixed`, reusing one factorization.
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    n: usize,
    free: Vec<usize>,
    fixed: Vec<usize>,
    a_ff: CsrMatrix,
    a_fb: CsrMatrix,
    chol: EnvelopeCholesky,
}

impl DirichletSolver {
    pub fn new(a: &CsrMatrix, fixed: &[usize]) -> Result<Self> {
        let n = a.nrows();
        let mut is_fixed = vec![false; n];
        for &i in fixed {
            is_fixed[i] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
        let fixed: Vec<usize> = (0..n).filter(|&i| is_fixed[i]).collect();
        let a_ff = a.submatrix(&free, &free);
        let a_fb = a.submatrix(&free, &fixed);
        let chol = if free.is_empty() {
            EnvelopeCholesky::factor(&CsrMatrix::from_diagonal(&[]))?
        } else {
            EnvelopeCholesky::factor(&a_ff)
                .map_err(|e| Error::Numerical(format!("fem: dirichlet factorization failed: {e}")))?
        };
        Ok(Self { n, free, fixed, a_ff, a_fb, chol })
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    /// `rhs` is a full-length vector; `values` follows the sorted fixed list.
    pub fn solve(&self, rhs: &[f64], values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.fixed.len() {
            return Err(Error::Numerical(format!(
                "fem: {} boundary values given for {} constrained nodes",
                values.len(),
                self.fixed.len()
            )));
        }
        let mut u = vec![0.0; self.n];
        for (&i, &v) in self.fixed.iter().zip(values) {
            u[i] = v;
        }
        if self.free.is_empty() {
            return Ok(u);
        }
        let lift = self.a_fb.mul_vec(values);
        let b: Vec<f64> = self.free.iter().zip(&lift).map(|(&i, l)| rhs[i] - l).collect();
        let x = self.chol.solve_refined(&self.a_ff, &b, 1);
        for (&i, v) in self.free.iter().zip(x) {
            u[i] = v;
        }
        Ok(u)
    }
}

/// Pure Neumann solver; solutions are normalized to zero `w`-mean.
#[derive(Debug, Clone)]
pub struct NeumannSolver {
    inner: DirichletSolver,
    weight_one: Vec<f64>,
    weight_total: f64,
}

impl NeumannSolver {
    /// `weight` is the mass matrix defining the mean constraint.
    pub fn new(a: &CsrMatrix, weight: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let weight_one = weight.mul_vec(&vec![1.0; n]);
        let weight_total: f64 = weight_one.iter().sum();
        if !(weight_total > 0.0) {
            return Err(Error::Numerical("fem: neumann mean weight has zero mass".into()));
        }
        let pin = (0..n)
            .max_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)).then(j.cmp(&i)))
            .unwrap_or(0);
        let inner = DirichletSolver::new(a, &[pin])?;
        Ok(Self { inner, weight_one, weight_total })
    }

    /// Solves `A u = b` for compatible `b` (`Σ b = 0`).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let sum: f64 = b.iter().sum();
        let scale: f64 = b.iter().map(|v| v.abs()).sum();
        if sum.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "fem: incompatible neumann data (net flux {sum:e} against {scale:e})"
            )));
        }
        let mut u = self.inner.solve(b, &[0.0])?;
        let mean = dot(&u, &self.weight_one) / self.weight_total;
        u.iter_mut().for_each(|v| *v -= mean);
        Ok(u)
    }
}

/// Fine-grid reference problem with homogeneous Dirichlet data.
#[derive(Debug, Clone)]
pub struct FineProblem {
    /// Full stiffness including boundary rows.
    pub stiffness: CsrMatrix,
    pub load: Vec<f64>,
    pub source: Vec<f64>,
    pub solver: DirichletSolver,
    pub solution: Vec<f64>,
}

impl FineProblem {
    pub fn new(mesh: &MeshHierarchy, kappa: &[f64], f: &[f64]) -> Result<Self> {
        let stiffness = stiffness(&mesh.fine, kappa);
        let load = load(&mesh.fine, f);
        let fixed: Vec<usize> = (0..mesh.fine.num_nodes()).filter(|&i| mesh.on_boundary[i]).collect();
        let solver = DirichletSolver::new(&stiffness, &fixed)?;
        let solution = solver.solve(&load, &vec![0.0; fixed.len()])?;
        Ok(Self { stiffness, load, source: f.to_vec(), solver, solution })
    }

    /// Energy seminorm `|v|_a`.
    pub fn energy(&self, v: &[f64]) -> f64 {
        self.stiffness.quad(v).max(0.0).sqrt()
    }

    /// Relative residual `‖A u − b‖ / ‖b‖` on the free nodes.
    pub fn residual(&self) -> f64 {
        let au = self.stiffness.mul_vec(&self.solution);
        let (mut r, mut b) = (0.0, 0.0);
        for &i in self.solver.free() {
            r += (au[i] - self.load[i]).powi(2);
            b += self.load[i].powi(2);
        }
        if b == 0.0 {
            r.sqrt()
        } else {
            (r / b).sqrt()
        }
    }
}

/// Solves the fine reference problem.
pub fn solve_fine(mesh: &MeshHierarchy, kappa: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    Ok(FineProblem::new(mesh, kappa, f)?.solution)
}

/// Local matrices of one neighborhood.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    /// Neumann stiffness on the neighborhood.
    pub stiffness: CsrMatrix,
    pub mass_tilde: CsrMatrix,
    pub mass_kappa: CsrMatrix,
    pub boundary_mass: CsrMatrix,
    pub kappa: Vec<f64>,
    pub tilde: Vec<f64>,
    pub tilde_inv: Vec<f64>,
    pub tilde_total: f64,
    pub boundary_length: f64,
}

impl LocalSystem {
    pub fn new(nb: &Neighborhood, kappa: &[f64], tilde: &[f64], tilde_inv: &[f64]) -> Self {
        let pick = |v: &[f64]| -> Vec<f64> { nb.cells.iter().map(|&c| v[c]).collect() };
        let (kappa, tilde, tilde_inv) = (pick(kappa), pick(tilde), pick(tilde_inv));
        Self {
            stiffness: stiffness(&nb.mesh, &kappa),
            mass_tilde: mass(&nb.mesh, &tilde),
            mass_kappa: mass(&nb.mesh, &kappa),
            boundary_mass: boundary_mass(&nb.mesh, &nb.boundary_edges),
            tilde_total: integrate_cells(&nb.mesh, &tilde),
            boundary_length: nb.boundary_length(),
            kappa,
            tilde,
            tilde_inv,
        }
    }

    /// Harmonic-extension solver with the neighborhood boundary fixed.
    pub fn dirichlet(&self, nb: &Neighborhood) -> Result<DirichletSolver> {
        DirichletSolver::new(&self.stiffness, &nb.boundary)
    }

    /// Neumann solver with the `κ̃`-mean constraint.
    pub fn neumann(&self) -> Result<NeumannSolver> {
        NeumannSolver::new(&self.stiffness, &self.mass_tilde)
    }
}

/// Plain-text dump of a nodal field: `node,value` records.
pub fn write_nodal<W: std::io::Write>(mut w: W, u: &[f64]) -> std::io::Result<()> {
    writeln!(w, "node,value")?;
    for (i, v) in u.iter().enumerate() {
        writeln!(w, "{i},{v:.12e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rectangle_mesh;

    #[test]
    fn reference_triangle_stiffness() {
        let m = TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]);
        let a = stiffness(&m, &[1.0]).to_dense();
        let want = nalgebra::DMatrix::from_row_slice(3, 3, &[1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5]);
        assert!((a - want).abs().max() < 1e-15);
    }

    #[test]
    fn unit_mass_integrates_area() {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 2, 2);
        let mm = mass(&m, &vec![1.0; m.num_cells()]);
        let one = vec![1.0; m.num_nodes()];
        assert!((mm.quad(&one) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_mass_measures_perimeter() {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 4, 4);
        let b = boundary_mass(&m, &m.boundary_edges());
        let one = vec![1.0; m.num_nodes()];
        assert!((b.quad(&one) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn neumann_rejects_incompatible_data() {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 4, 4);
        let a = stiffness(&m, &vec![1.0; m.num_cells()]);
        let w = mass(&m, &vec![1.0; m.num_cells()]);
        let s = NeumannSolver::new(&a, &w).unwrap();
        let mut b = vec![0.0; m.num_nodes()];
        b[3] = 1.0;
        assert!(s.solve(&b).is_err());
        b[7] = -1.0;
        let u = s.solve(&b).unwrap();
        let r = a.mul_vec(&u);
        assert!(r.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(w.bilinear(&u, &vec![1.0; m.num_nodes()]).abs() < 1e-14);
    }
}
