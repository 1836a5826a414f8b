//! Global multiscale spaces and the coarse Galerkin solve.
//!
//! The products `χ_i·w` form a generating set that may be numerically
//! dependent. Up to [`PIVOTED_LIMIT`] columns the Gram matrix is factored
//! with global diagonal pivoting; columns whose component orthogonal to the
//! accepted ones is below [`RANK_TOL`] of their norm are left out. Larger
//! spaces use a sparse Cholesky factor of the scaled Gram matrix shifted by
//! a small multiple of the identity, and the residual refinement removes the
//! shift.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::FineProblem;
use crate::mesh::{MeshHierarchy, Neighborhood};
use crate::pou::PartitionOfUnity;
use crate::sparse::{dot, CsrMatrix, EnvelopeCholesky};

/// Relative size of the orthogonal component below which a column is dropped.
pub const RANK_TOL: f64 = 1e-6;

/// Columns with energy below this fraction of the largest are dropped outright.
const NEGLIGIBLE: f64 = 1e-24;

/// Largest column count factored with global pivoting.
pub const PIVOTED_LIMIT: usize = 6000;

/// Shift of the scaled Gram matrix above [`PIVOTED_LIMIT`].
const REGULARIZATION: f64 = 1e-10;

/// Shifted pivots above this count towards the dimension.
const RANK_PIVOT: f64 = 1e-8;

const REFINE_STEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpaceKind {
    /// Local spectral plus Steklov plus corrector.
    S,
    /// Harmonic snapshots.
    Snap,
    /// POD-reduced snapshots.
    H,
}

impl SpaceKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S" => Some(Self::S),
            "SNAP" => Some(Self::Snap),
            "H" | "POD" => Some(Self::H),
            _ => None,
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::S => "S",
            Self::Snap => "SNAP",
            Self::H => "H",
        })
    }
}

/// A column restricted to its support.
#[derive(Debug, Clone, Default)]
pub struct SparseColumn {
    pub index: Vec<usize>,
    pub value: Vec<f64>,
}

impl SparseColumn {
    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.index.iter().zip(&self.value).map(|(&i, &v)| v * x[i]).sum()
    }

    pub fn add_to(&self, x: &mut [f64], s: f64) {
        for (&i, &v) in self.index.iter().zip(&self.value) {
            x[i] += s * v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        self.add_to(&mut x, 1.0);
        x
    }
}

/// Rank-revealing envelope factor `G_KK = L Lᵀ` over the kept columns.
#[derive(Debug, Clone)]
struct Pivoted {
    /// Kept columns in elimination order.
    kept: Vec<usize>,
    /// Row `t` of `L` covers kept positions `first[t]..=t`.
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
    /// Kept count before each group.
    block_start: Vec<usize>,
}

impl Pivoted {
    /// Global diagonal pivoting on the scaled Gram matrix, one group after the other.
    fn factor(gram: &CsrMatrix, groups: &[Vec<usize>]) -> Self {
        let n = gram.nrows();
        let diag = gram.diagonal();
        let top = diag.iter().copied().fold(0.0, f64::max);
        let scale: Vec<f64> = diag.iter().map(|&g| if g > NEGLIGIBLE * top { 1.0 / g.sqrt() } else { 0.0 }).collect();
        let active: Vec<usize> = (0..n).filter(|&c| scale[c] > 0.0).collect();
        let mut d: Vec<f64> = scale.iter().map(|&s| if s > 0.0 { 1.0 } else { 0.0 }).collect();
        let mut done = vec![false; n];
        let mut cols: Vec<f64> = Vec::new();
        let mut pivots = Vec::new();
        let mut block_start = Vec::new();
        let tol2 = RANK_TOL * RANK_TOL;
        for group in groups {
            block_start.push(pivots.len());
            loop {
                let best = group
                    .iter()
                    .copied()
                    .filter(|&c| !done[c] && scale[c] > 0.0)
                    .max_by(|&a, &b| d[a].total_cmp(&d[b]).then(b.cmp(&a)));
                let Some(p) = best else { break };
                if !(d[p] > tol2) {
                    break;
                }
                let k = pivots.len();
                let lp: Vec<f64> = (0..k).map(|s| cols[s * n + p]).collect();
                let mut v = vec![0.0; n];
                let (js, vs) = gram.row(p);
                for (&j, &g) in js.iter().zip(vs) {
                    v[j] = g * scale[j] * scale[p];
                }
                v.par_chunks_mut(512).enumerate().for_each(|(chunk, out)| {
                    let base = chunk * 512;
                    for (s, &ls) in lp.iter().enumerate() {
                        if ls == 0.0 {
                            continue;
                        }
                        let col = &cols[s * n + base..s * n + base + out.len()];
                        for (o, &c) in out.iter_mut().zip(col) {
                            *o -= ls * c;
                        }
                    }
                });
                let l = d[p].sqrt();
                done[p] = true;
                for &j in &active {
                    if done[j] {
                        v[j] = 0.0;
                    } else {
                        v[j] /= l;
                        d[j] -= v[j] * v[j];
                    }
                }
                v[p] = l;
                cols.extend_from_slice(&v);
                pivots.push(p);
            }
        }
        let r = pivots.len();
        let mut f = Pivoted { kept: pivots, first: vec![0; r], start: vec![0], vals: Vec::with_capacity(r * (r + 1) / 2), block_start };
        for t in 0..r {
            let k = f.kept[t];
            let g = diag[k].sqrt();
            for s in 0..=t {
                f.vals.push(g * cols[s * n + k]);
            }
            f.start.push(f.vals.len());
        }
        f
    }

    /// Solves `G_KK x = r_K` over the first `upto` kept positions.
    fn solve(&self, r: &[f64], upto: usize) -> Vec<f64> {
        let mut y: Vec<f64> = self.kept[..upto].iter().map(|&c| r[c]).collect();
        for t in 0..upto {
            let ft = self.first[t];
            let row = &self.vals[self.start[t]..self.start[t + 1]];
            let s = dot(&row[..t - ft], &y[ft..t]);
            y[t] = (y[t] - s) / row[t - ft];
        }
        for t in (0..upto).rev() {
            let ft = self.first[t];
            let row = &self.vals[self.start[t]..self.start[t + 1]];
            y[t] /= row[t - ft];
            let yt = y[t];
            for (v, &l) in y[ft..t].iter_mut().zip(&row[..t - ft]) {
                *v -= l * yt;
            }
        }
        let mut x = vec![0.0; r.len()];
        for (&c, v) in self.kept[..upto].iter().zip(y) {
            x[c] = v;
        }
        x
    }
}

/// Cholesky factor of `D^{-1/2} G D^{-1/2} + εI` over a column subset,
/// `D = diag(G)`.
#[derive(Debug, Clone)]
struct Regularized {
    cols: Vec<usize>,
    scale: Vec<f64>,
    chol: EnvelopeCholesky,
    /// Pivots clearly above the regularization.
    rank: usize,
}

impl Regularized {
    fn new(gram: &CsrMatrix, cols: &[usize]) -> Result<Self> {
        let diag = gram.diagonal();
        let top = diag.iter().copied().fold(0.0, f64::max);
        let cols: Vec<usize> = cols.iter().copied().filter(|&c| diag[c] > NEGLIGIBLE * top).collect();
        let scale: Vec<f64> = cols.iter().map(|&c| 1.0 / diag[c].sqrt()).collect();
        let sub = gram.submatrix(&cols, &cols);
        let mut trip = Vec::with_capacity(sub.nnz());
        for r in 0..cols.len() {
            let (js, vs) = sub.row(r);
            for (&j, &v) in js.iter().zip(vs) {
                let shift = if j == r { REGULARIZATION } else { 0.0 };
                trip.push((r, j, v * scale[r] * scale[j] + shift));
            }
        }
        let m = cols.len();
        let chol = EnvelopeCholesky::factor(&CsrMatrix::from_triplets(m, m, &trip))
            .map_err(|e| Error::Numerical(format!("global_solver: regularized factorization failed: {e}")))?;
        let rank = chol.pivots().iter().filter(|&&d| d > RANK_PIVOT).count();
        Ok(Self { cols, scale, chol, rank })
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let b: Vec<f64> = self.cols.iter().zip(&self.scale).map(|(&c, &s)| r[c] * s).collect();
        let y = self.chol.solve(&b);
        let mut x = vec![0.0; r.len()];
        for ((&c, &s), v) in self.cols.iter().zip(&self.scale).zip(y) {
            x[c] = s * v;
        }
        x
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Pivoted(Pivoted),
    Regularized { full: Regularized, leading: Option<Regularized> },
}

impl Factor {
    fn rank(&self) -> usize {
        match self {
            Factor::Pivoted(f) => f.kept.len(),
            Factor::Regularized { full, .. } => full.rank,
        }
    }

    fn leading_rank(&self) -> usize {
        match self {
            Factor::Pivoted(f) => f.block_start[1],
            Factor::Regularized { leading, .. } => leading.as_ref().map_or(0, |l| l.rank),
        }
    }

    /// Columns entering the solve.
    fn kept(&self) -> &[usize] {
        self.kept_for(false)
    }

    fn kept_for(&self, leading: bool) -> &[usize] {
        match (self, leading) {
            (Factor::Pivoted(f), false) => &f.kept,
            (Factor::Pivoted(f), true) => &f.kept[..f.block_start[1]],
            (Factor::Regularized { full, .. }, false) => &full.cols,
            (Factor::Regularized { leading, .. }, true) => leading.as_ref().map_or(&[], |l| &l.cols),
        }
    }

    fn solve(&self, r: &[f64], leading: bool) -> Vec<f64> {
        match (self, leading) {
            (Factor::Pivoted(f), false) => f.solve(r, f.kept.len()),
            (Factor::Pivoted(f), true) => f.solve(r, f.block_start[1]),
            (Factor::Regularized { full, .. }, false) => full.solve(r),
            (Factor::Regularized { leading, .. }, true) => leading.as_ref().map_or_else(|| vec![0.0; r.len()], |l| l.solve(r)),
        }
    }
}

/// Products `χ_i·w` of the partition of unity with local members.
#[derive(Debug, Clone)]
pub struct GlobalSpace {
    pub kind: SpaceKind,
    pub columns: Vec<SparseColumn>,
    /// Neighborhood of each column; columns are grouped by neighborhood.
    pub owner: Vec<usize>,
    /// Number of columns kept by the rank-revealing factorization.
    pub dim: usize,
    pub num_fine: usize,
    gram: CsrMatrix,
    factor: Factor,
    /// Kept columns that belong to the leading members.
    leading: usize,
}

/// Coarse solution on the fine grid with its coefficients.
#[derive(Debug, Clone)]
pub struct CoarseSolution {
    pub kind: SpaceKind,
    pub u: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub dim: usize,
    /// Refinement steps taken after the first solve.
    pub iterations: usize,
}

fn adjacency(mesh: &MeshHierarchy) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); mesh.coarse.num_nodes()];
    for t in &mesh.coarse.cells {
        for &a in t {
            adj[a].extend_from_slice(t);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// Builds the global space from local members, given per neighborhood on local nodes.
pub fn assemble_global(
    kind: SpaceKind,
    mesh: &MeshHierarchy,
    nbhds: &[Neighborhood],
    pou: &PartitionOfUnity,
    members: &[Vec<Vec<f64>>],
    stiffness: &CsrMatrix,
) -> Result<GlobalSpace> {
    assemble_nested(kind, mesh, nbhds, pou, members, stiffness, &vec![0; nbhds.len()])
}

/// Like [`assemble_global`], but the first `lead[i]` members of every
/// neighborhood are eliminated before all others, so that the space kept
/// for them alone is contained in the full kept space.
pub fn assemble_nested(
    kind: SpaceKind,
    mesh: &MeshHierarchy,
    nbhds: &[Neighborhood],
    pou: &PartitionOfUnity,
    members: &[Vec<Vec<f64>>],
    stiffness: &CsrMatrix,
    lead: &[usize],
) -> Result<GlobalSpace> {
    if members.len() != nbhds.len() || lead.len() != nbhds.len() {
        return Err(Error::Numerical(format!(
            "global_solver: {} member lists for {} neighborhoods",
            members.len(),
            nbhds.len()
        )));
    }
    let per_nbhd: Vec<Vec<SparseColumn>> = nbhds
        .par_iter()
        .zip(members.par_iter())
        .map(|(nb, ws)| {
            let chi = &pou.chi[nb.index];
            ws.iter()
                .map(|w| {
                    let mut col = SparseColumn::default();
                    for (l, &g) in nb.nodes.iter().enumerate() {
                        let v = chi[l] * w[l];
                        if !mesh.on_boundary[g] && v != 0.0 {
                            col.index.push(g);
                            col.value.push(v);
                        }
                    }
                    col
                })
                .collect()
        })
        .collect();
    let mut owner = Vec::new();
    let mut by_nbhd = vec![Vec::new(); nbhds.len()];
    let mut columns = Vec::new();
    for (i, cols) in per_nbhd.into_iter().enumerate() {
        for c in cols {
            by_nbhd[i].push(columns.len());
            owner.push(i);
            columns.push(c);
        }
    }
    let num_fine = stiffness.nrows();
    let adj = adjacency(mesh);
    let trip: Vec<(usize, usize, f64)> = (0..nbhds.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut scratch = vec![0.0; num_fine];
            let mut out = Vec::new();
            for &a in &by_nbhd[i] {
                let col = &columns[a];
                let mut touched = Vec::new();
                for (&g, &v) in col.index.iter().zip(&col.value) {
                    let (cs, vs) = stiffness.row(g);
                    for (&c, &s) in cs.iter().zip(vs) {
                        if scratch[c] == 0.0 {
                            touched.push(c);
                        }
                        scratch[c] += s * v;
                    }
                }
                for &j in adj[i].iter().filter(|&&j| j >= i) {
                    for &b in &by_nbhd[j] {
                        if j == i && b < a {
                            continue;
                        }
                        let g = columns[b].dot_dense(&scratch);
                        if g != 0.0 {
                            out.push((a, b, g));
                            if a != b {
                                out.push((b, a, g));
                            }
                        }
                    }
                }
                for &c in &touched {
                    scratch[c] = 0.0;
                }
            }
            out.into_iter()
        })
        .collect();
    let n = columns.len();
    let gram = CsrMatrix::from_triplets(n, n, &trip);
    let mut lead_cols = Vec::new();
    let mut rest = Vec::new();
    for (cols, &l) in by_nbhd.iter().zip(lead) {
        let (a, b) = cols.split_at(l.min(cols.len()));
        lead_cols.extend_from_slice(a);
        rest.extend_from_slice(b);
    }
    let factor = if n <= PIVOTED_LIMIT {
        Factor::Pivoted(Pivoted::factor(&gram, &[lead_cols, rest]))
    } else {
        let all: Vec<usize> = (0..n).collect();
        let leading = if lead_cols.is_empty() { None } else { Some(Regularized::new(&gram, &lead_cols)?) };
        Factor::Regularized { full: Regularized::new(&gram, &all)?, leading }
    };
    let leading = factor.leading_rank();
    let dim = factor.rank();
    if dim == 0 {
        return Err(Error::Numerical(format!("global_solver: {kind} space has no independent columns")));
    }
    Ok(GlobalSpace { kind, columns, owner, dim, num_fine, gram, factor, leading })
}

impl GlobalSpace {
    pub fn gram(&self) -> &CsrMatrix {
        &self.gram
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// Kept columns among the leading members.
    pub fn leading_dim(&self) -> usize {
        self.leading
    }

    /// `B c` on the fine grid.
    pub fn expand(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.num_fine];
        for (col, &c) in self.columns.iter().zip(coeffs) {
            if c != 0.0 {
                col.add_to(&mut u, c);
            }
        }
        u
    }

    /// `Bᵀ x`.
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.columns.par_iter().map(|c| c.dot_dense(x)).collect()
    }

    /// Solves `Bᵀ A B c = Bᵀ b` for the fine load.
    pub fn solve_coarse(&self, fine: &FineProblem) -> Result<CoarseSolution> {
        self.solve_rhs(fine, &fine.load)
    }

    /// Galerkin solve for an arbitrary fine load vector.
    pub fn solve_rhs(&self, fine: &FineProblem, load: &[f64]) -> Result<CoarseSolution> {
        self.solve_upto(fine, load, false)
    }

    /// Galerkin solve over the kept leading columns only.
    pub fn solve_leading(&self, fine: &FineProblem) -> Result<CoarseSolution> {
        if self.leading == 0 {
            return Err(Error::Numerical(format!("global_solver: {} space has no leading columns", self.kind)));
        }
        self.solve_upto(fine, &fine.load, true)
    }

    /// Refines against the residual recomputed on the fine grid while the
    /// scaled Galerkin residual over the solved columns keeps shrinking.
    fn solve_upto(&self, fine: &FineProblem, load: &[f64], leading: bool) -> Result<CoarseSolution> {
        let cols = self.factor.kept_for(leading);
        let residual = |u: &[f64]| -> (Vec<f64>, f64) {
            let au = fine.stiffness.mul_vec(u);
            let res: Vec<f64> = load.iter().zip(&au).map(|(b, a)| b - a).collect();
            let r = self.restrict(&res);
            let size = cols.iter().map(|&k| r[k] * r[k] / self.gram.get(k, k)).sum::<f64>();
            (r, size)
        };
        let mut c = self.factor.solve(&self.restrict(load), leading);
        let mut u = self.expand(&c);
        let (mut r, mut size) = residual(&u);
        let mut iterations = 0;
        for _ in 0..REFINE_STEPS {
            let dc = self.factor.solve(&r, leading);
            let trial_c: Vec<f64> = c.iter().zip(&dc).map(|(a, b)| a + b).collect();
            let trial_u = self.expand(&trial_c);
            let (trial_r, trial_size) = residual(&trial_u);
            if !(trial_size < size) {
                break;
            }
            c = trial_c;
            u = trial_u;
            r = trial_r;
            size = trial_size;
            iterations += 1;
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("global_solver: {} coarse solve produced non-finite coefficients", self.kind)));
        }
        let dim = if leading { self.leading } else { self.dim };
        Ok(CoarseSolution { kind: self.kind, u, coeffs: c, dim, iterations })
    }

    /// `max_w |a(u_h − u_ms, w)| / (|u_h|_a |w|_a)` over the kept columns.
    pub fn galerkin_defect(&self, fine: &FineProblem, u_ms: &[f64]) -> f64 {
        let e: Vec<f64> = fine.solution.iter().zip(u_ms).map(|(a, b)| a - b).collect();
        let ae = fine.stiffness.mul_vec(&e);
        let uh = fine.energy(&fine.solution);
        self.factor
            .kept()
            .iter()
            .map(|&k| {
                let d = self.gram.get(k, k);
                self.columns[k].dot_dense(&ae).abs() / (uh * d.sqrt()).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

/// Plain-text dump of coarse coefficients: `column,neighborhood,value`.
pub fn write_coefficients<W: std::io::Write>(mut w: W, space: &GlobalSpace, sol: &CoarseSolution) -> std::io::Result<()> {
    writeln!(w, "column,neighborhood,value")?;
    for (k, &i) in space.owner.iter().enumerate() {
        writeln!(w, "{k},{i},{:.12e}", sol.coeffs[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gram of random columns with a banded block coupling and planted dependencies.
    fn planted(blocks: usize, width: usize, seed: u64) -> (CsrMatrix, Vec<Vec<usize>>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = blocks * 3 + 6;
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut groups = Vec::new();
        for b in 0..blocks {
            let mut g = Vec::new();
            for k in 0..width {
                let mut v = vec![0.0; rows];
                if k + 1 == width && b > 0 {
                    // Copy of a column of the previous block, scaled.
                    let prev: Vec<f64> = cols[(b - 1) * width].iter().map(|x| 3.0 * x).collect();
                    v = prev;
                } else {
                    for r in 3 * b..3 * b + 6 {
                        v[r] = rng.random_range(-1.0..1.0);
                    }
                }
                g.push(cols.len());
                cols.push(v);
            }
            groups.push(g);
        }
        let n = cols.len();
        let mut trip = Vec::new();
        for a in 0..n {
            for c in 0..n {
                let v = dot(&cols[a], &cols[c]);
                if v != 0.0 {
                    trip.push((a, c, v));
                }
            }
        }
        let rank = {
            let m = DMatrix::from_fn(rows, n, |r, c| cols[c][r]);
            m.rank(1e-9)
        };
        (CsrMatrix::from_triplets(n, n, &trip), groups, rank)
    }

    #[test]
    fn factor_keeps_numerical_rank_and_solves_kept_system() {
        let (g, groups, rank) = planted(6, 4, 3);
        let f = Pivoted::factor(&g, &[groups.concat()]);
        assert_eq!(f.kept.len(), rank);
        let r: Vec<f64> = (0..g.nrows()).map(|k| (k as f64 * 0.37).sin()).collect();
        let x = f.solve(&r, f.kept.len());
        let gx = g.mul_vec(&x);
        for &k in &f.kept {
            assert!((gx[k] - r[k]).abs() < 1e-9, "row {k}: {} vs {}", gx[k], r[k]);
        }
    }

    #[test]
    fn shifted_factor_counts_rank_and_solves_consistent_systems() {
        let (g, _, rank) = planted(6, 4, 3);
        let all: Vec<usize> = (0..g.nrows()).collect();
        let f = Regularized::new(&g, &all).unwrap();
        assert_eq!(f.rank, rank);
        let y: Vec<f64> = (0..g.nrows()).map(|k| (k as f64 * 0.37).sin()).collect();
        let r = g.mul_vec(&y);
        let mut x = f.solve(&r);
        for _ in 0..3 {
            let gx = g.mul_vec(&x);
            let res: Vec<f64> = r.iter().zip(&gx).map(|(a, b)| a - b).collect();
            let dx = f.solve(&res);
            x.iter_mut().zip(dx).for_each(|(a, b)| *a += b);
        }
        let e: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        assert!(g.quad(&e) < 1e-12 * g.quad(&y), "{} of {}", g.quad(&e), g.quad(&y));
    }
}
