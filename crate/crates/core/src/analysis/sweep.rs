//! Eigenvalue tables and the very-weak stability sweep over contrasts.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::report::{num, write_rows};
use super::{estimate_friedrichs, Region};
use crate::error::{Error, Result};
use crate::mesh::{dist, Neighborhood};
use crate::pipeline::Setup;
use crate::snapshots::{build_snapshots, pod_reduce};
use crate::spectral::{solve_neumann_eig, solve_steklov_eig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub contrast: f64,
    pub nbhd: usize,
    /// One-based index.
    pub j: usize,
    pub lambda: f64,
}

/// Neumann (`S`, nonzero eigenvalues only), Steklov (`T`, from the zero
/// eigenvalue) and POD (`H`) eigenvalues of every neighborhood.
#[derive(Debug, Clone, Default)]
pub struct Spectra {
    pub s: Vec<SpectrumRow>,
    pub t: Vec<SpectrumRow>,
    pub h: Vec<SpectrumRow>,
}

pub fn spectra_tables(setup: &Setup, count: usize) -> Result<Spectra> {
    let contrast = setup.kappa.contrast;
    let per: Vec<[Vec<SpectrumRow>; 3]> = setup
        .nbhds
        .par_iter()
        .zip(setup.locals.par_iter())
        .map(|(nb, sys)| {
            let i = nb.index;
            let rows = |vals: &[f64]| -> Vec<SpectrumRow> {
                vals.iter()
                    .take(count)
                    .enumerate()
                    .map(|(k, &lambda)| SpectrumRow { contrast, nbhd: i, j: k + 1, lambda })
                    .collect()
            };
            let s = solve_neumann_eig(i, sys, count.min(nb.num_nodes() - 1))?;
            let l = nb.boundary.len();
            let t = solve_steklov_eig(i, sys, l, count.min(l))?;
            let snap = build_snapshots(nb, sys)?;
            let h = pod_reduce(&snap, sys, 1)?;
            Ok([rows(&s.values), rows(&t.values), rows(&h.values)])
        })
        .collect::<Result<_>>()?;
    let mut out = Spectra::default();
    for [s, t, h] in per {
        out.s.extend(s);
        out.t.extend(t);
        out.h.extend(h);
    }
    Ok(out)
}

pub fn write_spectra<W: Write>(w: W, rows: &[SpectrumRow], kind: &str) -> Result<()> {
    let rows = rows
        .iter()
        .map(|r| vec![num(r.contrast), r.nbhd.to_string(), kind.to_string(), r.j.to_string(), num(r.lambda)]);
    write_rows(w, &["contrast", "neighborhood", "kind", "j", "lambda"], rows)
}

/// Boundary nodes of a neighborhood in loop order with their arclength.
pub fn boundary_loop(nb: &Neighborhood) -> Result<Vec<(usize, f64)>> {
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for e in &nb.boundary_edges {
        adj.entry(e[0]).or_default().push(e[1]);
        adj.entry(e[1]).or_default().push(e[0]);
    }
    let fail = || Error::Mesh(format!("analysis: neighborhood {} boundary is not a single loop", nb.index));
    if adj.values().any(|v| v.len() != 2) {
        return Err(fail());
    }
    let start = *nb.boundary.first().ok_or_else(fail)?;
    let mut out = vec![(start, 0.0)];
    let (mut prev, mut cur) = (start, adj[&start].iter().copied().min().ok_or_else(fail)?);
    let mut s = dist(nb.mesh.nodes[start], nb.mesh.nodes[cur]);
    while cur != start {
        out.push((cur, s));
        let next = adj[&cur].iter().copied().find(|&v| v != prev).ok_or_else(fail)?;
        s += dist(nb.mesh.nodes[cur], nb.mesh.nodes[next]);
        prev = cur;
        cur = next;
    }
    if out.len() != nb.boundary.len() {
        return Err(fail());
    }
    Ok(out)
}

/// Boundary data of the stability sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trace {
    Constant,
    /// Hat of the `k`-th boundary node.
    Hat(usize),
    Cos(usize),
    Sin(usize),
    Random(usize),
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant => f.write_str("const"),
            Self::Hat(k) => write!(f, "hat:{k}"),
            Self::Cos(k) => write!(f, "cos:{k}"),
            Self::Sin(k) => write!(f, "sin:{k}"),
            Self::Random(k) => write!(f, "random:{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixRow {
    pub contrast: f64,
    pub nbhd: usize,
    pub trace: Trace,
    /// `‖v‖_{L²_κ̃(ω)} / ‖g‖_{L²(∂ω)}`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixSummary {
    pub contrast: f64,
    pub nbhd: usize,
    pub max_ratio: f64,
    pub argmax: Trace,
    pub c_poin_local: f64,
    pub c_poin_domain: f64,
}

/// Traces on `nb.boundary` order.
fn traces(nb: &Neighborhood, random: usize, freqs: usize, seed: u64) -> Result<Vec<(Trace, Vec<f64>)>> {
    let l = nb.boundary.len();
    let mut out = vec![(Trace::Constant, vec![1.0; l])];
    for k in 0..l {
        let mut g = vec![0.0; l];
        g[k] = 1.0;
        out.push((Trace::Hat(k), g));
    }
    let lp = boundary_loop(nb)?;
    let total = nb.boundary_length();
    let pos: HashMap<usize, f64> = lp.into_iter().collect();
    for k in 1..=freqs {
        let w = 2.0 * std::f64::consts::PI * k as f64 / total;
        out.push((Trace::Cos(k), nb.boundary.iter().map(|b| (w * pos[b]).cos()).collect()));
        out.push((Trace::Sin(k), nb.boundary.iter().map(|b| (w * pos[b]).sin()).collect()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..random {
        out.push((Trace::Random(k), (0..l).map(|_| rng.random_range(-1.0..=1.0)).collect()));
    }
    Ok(out)
}

/// Harmonic extensions of the sampled traces on neighborhood `nbhd` for each
/// contrast; `base` fixes mesh, geometry and source.
pub fn appendix_stability_sweep(
    base: &Setup,
    nbhd: usize,
    contrasts: &[f64],
    random_traces: usize,
    frequencies: usize,
    seed: u64,
) -> Result<(Vec<AppendixRow>, Vec<AppendixSummary>)> {
    let nb = base
        .nbhds
        .get(nbhd)
        .ok_or_else(|| Error::Config(format!("appendix: neighborhood {nbhd} does not exist")))?;
    let data = traces(nb, random_traces, frequencies, seed)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &c in contrasts {
        let setup = Setup::new(base.mesh.clone(), base.kappa.with_contrast(c)?, base.fine.source.clone())?;
        let nb = &setup.nbhds[nbhd];
        let sys = &setup.locals[nbhd];
        let solver = sys.dirichlet(nb)?;
        let zero = vec![0.0; nb.num_nodes()];
        let ratios: Vec<(Trace, f64)> = data
            .par_iter()
            .map(|(t, g)| {
                let v = solver.solve(&zero, g)?;
                let mut gf = vec![0.0; nb.num_nodes()];
                for (&b, &x) in nb.boundary.iter().zip(g) {
                    gf[b] = x;
                }
                let num = sys.mass_tilde.quad(&v).max(0.0).sqrt();
                let den = sys.boundary_mass.quad(&gf).max(0.0).sqrt();
                Ok((*t, num / den))
            })
            .collect::<Result<_>>()?;
        let (argmax, max_ratio) = ratios
            .iter()
            .copied()
            .fold((Trace::Constant, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        summary.push(AppendixSummary {
            contrast: c,
            nbhd,
            max_ratio,
            argmax,
            c_poin_local: estimate_friedrichs(&setup, Region::Neighborhood(nbhd))?,
            c_poin_domain: estimate_friedrichs(&setup, Region::Domain)?,
        });
        rows.extend(ratios.into_iter().map(|(trace, ratio)| AppendixRow { contrast: c, nbhd, trace, ratio }));
    }
    Ok((rows, summary))
}

pub fn write_appendix<W: Write>(w: W, rows: &[AppendixRow]) -> Result<()> {
    let rows = rows
        .iter()
        .map(|r| vec![num(r.contrast), r.nbhd.to_string(), r.trace.to_string(), num(r.ratio)]);
    write_rows(w, &["contrast", "neighborhood", "trace", "ratio"], rows)
}

pub fn write_appendix_max<W: Write>(w: W, rows: &[AppendixSummary]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            num(r.contrast),
            r.nbhd.to_string(),
            num(r.max_ratio),
            r.argmax.to_string(),
            num(r.c_poin_local),
            num(r.c_poin_domain),
        ]
    });
    write_rows(w, &["contrast", "neighborhood", "max_ratio", "argmax", "C_poin_local", "C_poin_domain"], rows)
}
