//! Multiscale partition of unity: `κ`-harmonic extensions of the affine
//! coarse nodal data, solved element by element.

use rayon::prelude::*;

use crate::coefficient::CoefficientField;
use crate::error::Result;
use crate::fem::{gradient, stiffness, DirichletSolver};
use crate::mesh::{barycentric, MeshHierarchy, Neighborhood, TriMesh};

/// The functions `χ_i` and their gradient statistics.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    /// `χ_i` on the local nodes of neighborhood `i`.
    pub chi: Vec<Vec<f64>>,
    /// `Σ_i |∇χ_i|²` per fine cell.
    pub grad_sq_sum: Vec<f64>,
    /// `max_i ‖∇χ_i‖_∞`.
    pub c0: f64,
    pub coarse_size: f64,
}

struct ElementSolution {
    nodes: Vec<usize>,
    /// Values of the three vertex functions at `nodes`.
    values: [Vec<f64>; 3],
    grad_sq: Vec<f64>,
    max_grad: f64,
}

fn solve_element(mesh: &MeshHierarchy, kappa: &CoefficientField, k: usize) -> Result<ElementSolution> {
    let nodes = mesh.fine_nodes_of_coarse(k);
    let local = |g: usize| nodes.binary_search(&g).expect("node of coarse element");
    let cells = &mesh.coarse_to_fine[k];
    let sub = TriMesh {
        nodes: nodes.iter().map(|&g| mesh.fine.nodes[g]).collect(),
        cells: cells
            .iter()
            .map(|&c| {
                let t = mesh.fine.cells[c];
                [local(t[0]), local(t[1]), local(t[2])]
            })
            .collect(),
    };
    let kap: Vec<f64> = cells.iter().map(|&c| kappa.values[c]).collect();
    let a = stiffness(&sub, &kap);
    let solver = DirichletSolver::new(&a, &sub.boundary_nodes())?;
    let tri = mesh.coarse.vertices(k);
    let zero = vec![0.0; sub.num_nodes()];
    let mut values: [Vec<f64>; 3] = Default::default();
    for (v, out) in values.iter_mut().enumerate() {
        let data: Vec<f64> = solver
            .fixed()
            .iter()
            .map(|&i| barycentric(tri, sub.nodes[i])[v])
            .collect();
        *out = solver.solve(&zero, &data)?;
    }
    for i in 0..sub.num_nodes() {
        let s = values[0][i] + values[1][i] + values[2][i];
        for v in values.iter_mut() {
            v[i] /= s;
        }
    }
    let mut grad_sq = vec![0.0; sub.num_cells()];
    let mut max_grad = 0.0f64;
    for (c, g) in grad_sq.iter_mut().enumerate() {
        for v in &values {
            let d = gradient(&sub, v, c);
            let n2 = d[0] * d[0] + d[1] * d[1];
            *g += n2;
            max_grad = max_grad.max(n2.sqrt());
        }
    }
    Ok(ElementSolution { nodes, values, grad_sq, max_grad })
}

/// Builds `χ_i` for every coarse node.
pub fn build_pou(mesh: &MeshHierarchy, kappa: &CoefficientField, nbhds: &[Neighborhood]) -> Result<PartitionOfUnity> {
    let elems: Vec<ElementSolution> = (0..mesh.coarse.num_cells())
        .into_par_iter()
        .map(|k| solve_element(mesh, kappa, k))
        .collect::<Result<_>>()?;
    let mut grad_sq_sum = vec![0.0; mesh.fine.num_cells()];
    let mut c0 = 0.0f64;
    for (k, e) in elems.iter().enumerate() {
        for (c, g) in mesh.coarse_to_fine[k].iter().zip(&e.grad_sq) {
            grad_sq_sum[*c] = *g;
        }
        c0 = c0.max(e.max_grad);
    }
    let chi = nbhds
        .par_iter()
        .map(|nb| {
            nb.nodes
                .iter()
                .map(|&g| {
                    for &k in &nb.coarse_cells {
                        let e = &elems[k];
                        if let Ok(p) = e.nodes.binary_search(&g) {
                            let v = mesh.coarse.cells[k]
                                .iter()
                                .position(|&v| v == nb.index)
                                .expect("vertex of star element");
                            return e.values[v][p];
                        }
                    }
                    unreachable!("neighborhood node outside its coarse elements")
                })
                .collect()
        })
        .collect();
    Ok(PartitionOfUnity { chi, grad_sq_sum, c0, coarse_size: mesh.coarse_size })
}

impl PartitionOfUnity {
    /// `Σ_i χ_i` at every fine node.
    pub fn sum(&self, num_fine_nodes: usize, nbhds: &[Neighborhood]) -> Vec<f64> {
        let mut s = vec![0.0; num_fine_nodes];
        for (nb, chi) in nbhds.iter().zip(&self.chi) {
            for (&g, &v) in nb.nodes.iter().zip(chi) {
                s[g] += v;
            }
        }
        s
    }

    /// `max_i ‖∇χ_i‖_∞`, recomputed from the nodal vectors.
    pub fn measure_gradient_bound(&self, nbhds: &[Neighborhood]) -> f64 {
        nbhds
            .iter()
            .zip(&self.chi)
            .map(|(nb, chi)| {
                (0..nb.mesh.num_cells())
                    .map(|c| {
                        let g = gradient(&nb.mesh, chi, c);
                        (g[0] * g[0] + g[1] * g[1]).sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Plain-text dump of `χ_i`: `node,value` records over global fine nodes.
    pub fn write_text<W: std::io::Write>(&self, mut w: W, nb: &Neighborhood) -> std::io::Result<()> {
        writeln!(w, "node,value")?;
        for (&g, v) in nb.nodes.iter().zip(&self.chi[nb.index]) {
            writeln!(w, "{g},{v:.12e}")?;
        }
        Ok(())
    }
}
