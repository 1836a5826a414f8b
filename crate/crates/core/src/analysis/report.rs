//! Error reports, convergence studies and their CSV artifacts.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use super::{diff, measure_constants, Constants};
use crate::config::StudyConfig;
use crate::error::{Error, Result};
use crate::global::{CoarseSolution, GlobalSpace, SpaceKind};
use crate::pipeline::{
    build_all_snapshots, build_pod, build_spectral, min_lambda_pod, pod_members, snapshot_members, solve_kind, Budgets,
    Setup,
};
use crate::snapshots::SnapshotSpace;

pub const REPORT_HEADER: [&str; 14] = [
    "run_id",
    "kind",
    "H",
    "h",
    "contrast",
    "dim_space",
    "energy_error",
    "l2_ktilde_error",
    "min_lambda_S",
    "min_lambda_T",
    "min_lambda_H",
    "C_poin_max",
    "C0",
    "seconds",
];

/// One `(H, kind)` run. Thresholds that do not apply to the kind are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub run_id: usize,
    pub kind: SpaceKind,
    pub coarse_size: f64,
    pub fine_size: f64,
    pub contrast: f64,
    pub dim_space: usize,
    /// `|u_h − u_ms|_a`.
    pub energy_error: f64,
    /// `‖u_h − u_ms‖_{L²_κ̃(D)}`.
    pub l2_ktilde_error: f64,
    /// `min_i λ^S_{ℓ_i^I}`.
    pub min_lambda_s: f64,
    /// `min_i λ^T_{ℓ_i^II+1}`.
    pub min_lambda_t: f64,
    /// `min_i λ^H_{ℓ_i+1}`.
    pub min_lambda_h: f64,
    pub c_poin_max: f64,
    pub c_poin_domain: f64,
    pub c0: f64,
    pub overlap: usize,
    pub seconds: f64,
}

/// A finished run with its space and solution.
#[derive(Debug, Clone)]
pub struct KindRun {
    pub report: ErrorReport,
    pub space: GlobalSpace,
    pub solution: CoarseSolution,
}

fn finite_or_nan(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

/// Runs every kind on one setup. `run_id` is left at zero.
pub fn run_kinds(setup: &Setup, consts: &Constants, kinds: &[SpaceKind], budgets: &Budgets, timing: bool) -> Result<Vec<KindRun>> {
    let mut snaps: Option<Vec<SnapshotSpace>> = None;
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let start = Instant::now();
        let mut lam = [f64::NAN; 3];
        let members = match kind {
            SpaceKind::S => {
                let bases = build_spectral(setup, budgets)?;
                lam[0] = bases.min_lambda_s();
                lam[1] = bases.min_lambda_t();
                bases.members()
            }
            SpaceKind::Snap | SpaceKind::H => {
                if snaps.is_none() {
                    snaps = Some(build_all_snapshots(setup)?);
                }
                let s = snaps.as_deref().unwrap_or(&[]);
                if kind == SpaceKind::Snap {
                    snapshot_members(s)
                } else {
                    let pods = build_pod(setup, s, budgets)?;
                    lam[2] = min_lambda_pod(&pods);
                    pod_members(&pods)
                }
            }
        };
        let (space, solution) = solve_kind(setup, kind, &members)?;
        let seconds = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
        let e = diff(&setup.fine.solution, &solution.u);
        let report = ErrorReport {
            run_id: 0,
            kind,
            coarse_size: setup.coarse_size(),
            fine_size: setup.mesh.fine_size,
            contrast: setup.kappa.contrast,
            dim_space: space.dim,
            energy_error: setup.fine.energy(&e),
            l2_ktilde_error: setup.mass_tilde.quad(&e).max(0.0).sqrt(),
            min_lambda_s: finite_or_nan(lam[0]),
            min_lambda_t: finite_or_nan(lam[1]),
            min_lambda_h: finite_or_nan(lam[2]),
            c_poin_max: consts.c_poin_max(),
            c_poin_domain: consts.c_poin_domain,
            c0: consts.c0,
            overlap: consts.overlap,
            seconds,
        };
        out.push(KindRun { report, space, solution });
    }
    Ok(out)
}

/// Least-squares slope of `log error` against `log H`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub kind: SpaceKind,
    pub slope: f64,
    /// Number of `H` values used.
    pub points: usize,
}

/// Fits the slope over the three smallest `H` with positive error.
pub fn fit_rate(kind: SpaceKind, points: &[(f64, f64)]) -> RateFit {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(h, e)| h > 0.0 && e > 0.0 && e.is_finite())
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.truncate(3);
    let n = pts.len();
    if n < 2 {
        return RateFit { kind, slope: f64::NAN, points: n };
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    RateFit { kind, slope: sxy / sxx, points: n }
}

#[derive(Debug, Clone)]
pub struct Study {
    pub reports: Vec<ErrorReport>,
    pub rates: Vec<RateFit>,
}

/// Every configured `H` and kind at the configured contrast.
pub fn convergence_study(cfg: &StudyConfig) -> Result<Study> {
    let kinds = cfg.kinds()?;
    let budgets = cfg.budgets();
    let per_h: Vec<Vec<ErrorReport>> = cfg
        .mesh
        .coarse_sizes
        .par_iter()
        .map(|&h| {
            let setup = cfg.setup(h, cfg.coefficient.contrast)?;
            let consts = measure_constants(&setup)?;
            let runs = run_kinds(&setup, &consts, &kinds, &budgets, cfg.output.timing)?;
            Ok(runs.into_iter().map(|r| r.report).collect())
        })
        .collect::<Result<_>>()?;
    let mut reports: Vec<ErrorReport> = per_h.into_iter().flatten().collect();
    for (k, r) in reports.iter_mut().enumerate() {
        r.run_id = k;
    }
    let rates = kinds
        .iter()
        .map(|&kind| {
            let pts: Vec<(f64, f64)> = reports
                .iter()
                .filter(|r| r.kind == kind)
                .map(|r| (r.coarse_size, r.energy_error))
                .collect();
            fit_rate(kind, &pts)
        })
        .collect();
    Ok(Study { reports, rates })
}

pub(crate) fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else {
        "nan".into()
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numerical(format!("analysis: csv: {other:?}")),
    }
}

pub(crate) fn write_rows<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for r in rows {
        out.write_record(&r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_reports<W: Write>(w: W, reports: &[ErrorReport]) -> Result<()> {
    let rows = reports.iter().map(|r| {
        vec![
            r.run_id.to_string(),
            r.kind.to_string(),
            num(r.coarse_size),
            num(r.fine_size),
            num(r.contrast),
            r.dim_space.to_string(),
            num(r.energy_error),
            num(r.l2_ktilde_error),
            num(r.min_lambda_s),
            num(r.min_lambda_t),
            num(r.min_lambda_h),
            num(r.c_poin_max),
            num(r.c0),
            num(r.seconds),
        ]
    });
    write_rows(w, &REPORT_HEADER, rows)
}

pub fn write_rates<W: Write>(w: W, rates: &[RateFit]) -> Result<()> {
    let rows = rates.iter().map(|r| vec![r.kind.to_string(), num(r.slope), r.points.to_string()]);
    write_rows(w, &["kind", "slope", "points"], rows)
}

/// `H energy_error` pairs of one kind, one per line.
pub fn write_plot<W: Write>(mut w: W, reports: &[ErrorReport], kind: SpaceKind) -> Result<()> {
    writeln!(w, "# H energy_error ({kind})")?;
    for r in reports.iter().filter(|r| r.kind == kind) {
        writeln!(w, "{} {}", num(r.coarse_size), num(r.energy_error))?;
    }
    Ok(())
}
