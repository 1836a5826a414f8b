//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gmsfem::analysis::{appendix_stability_sweep, convergence_study, inequality_suite, measure_constants, pod_truncation_errors};
use gmsfem::config::StudyConfig;
use gmsfem::fem::LocalSystem;
use gmsfem::mesh::{disk_mesh, rectangle_mesh};
use gmsfem::pipeline::{build_all_snapshots, build_pod, solve_nested};
use gmsfem::snapshots::pod_reduce;
use gmsfem::spectral::{solve_neumann_eig, solve_steklov_eig};
use gmsfem::{Neighborhood, SpaceKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), gmsfem::Error>;
type Criterion = (&'static str, f64, fn() -> Outcome);

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> StudyConfig {
    StudyConfig::load(&root().join("configs").join(format!("{name}.toml"))).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")
}

fn unit_conductivity_reduces_to_hats() -> Outcome {
    let setup = config("unit").setup(0.25, 1.0)?;
    let h = setup.coarse_size();
    let mut sup = 0.0f64;
    for nb in &setup.nbhds {
        let c = setup.mesh.coarse.nodes[nb.index];
        for (l, &g) in nb.nodes.iter().enumerate() {
            let p = setup.mesh.fine.nodes[g];
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            let hat = (1.0 - dx.abs().max(dy.abs()).max((dx - dy).abs()) / h).max(0.0);
            sup = sup.max((setup.pou.chi[nb.index][l] - hat).abs());
        }
    }
    let weight = setup.weights.tilde.iter().map(|t| (t - 4.0).abs()).fold(0.0, f64::max);
    Ok((sup <= 1e-12 && weight <= 1e-12, format!("hat error {sup:.2e}, weight error {weight:.2e}")))
}

fn eigenvalues_match_closed_forms() -> Outcome {
    let mesh = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 64, 64);
    let m = mesh.num_cells();
    let nb = Neighborhood::from_mesh(mesh);
    let sys = LocalSystem::new(&nb, &vec![1.0; m], &vec![4.0; m], &vec![0.25; m]);
    let set = solve_neumann_eig(0, &sys, 5)?;
    let mut neumann = 0.0f64;
    for (j, s) in [1.0, 1.0, 2.0, 4.0, 4.0].iter().enumerate() {
        let lam = set.lambda(j + 1).unwrap_or(f64::NAN);
        neumann = neumann.max(rel(lam, PI * PI * s / 4.0));
    }
    let mesh = disk_mesh(1.0, 24);
    let m = mesh.num_cells();
    let nb = Neighborhood::from_mesh(mesh);
    let sys = LocalSystem::new(&nb, &vec![1.0; m], &vec![1.0; m], &vec![1.0; m]);
    let set = solve_steklov_eig(0, &sys, nb.boundary.len(), 5)?;
    let mut steklov = set.values[0].abs();
    for (v, e) in set.values[1..].iter().zip([1.0, 1.0, 2.0, 2.0]) {
        steklov = steklov.max(rel(*v, e));
    }
    Ok((
        neumann <= 2e-2 && steklov <= 5e-2,
        format!("Neumann max rel {neumann:.2e}, Steklov max dev {steklov:.2e}"),
    ))
}

fn pythagorean_identity_on_two_disks() -> Outcome {
    let cfg = config("two_disks");
    let setup = cfg.setup(cfg.mesh.coarse_sizes[0], cfg.coefficient.contrast)?;
    let snaps = build_all_snapshots(&setup)?;
    let pods = build_pod(&setup, &snaps, &cfg.budgets())?;
    let (snap, off) = solve_nested(&setup, &snaps, &pods)?;
    let uh = &setup.fine.solution;
    let gap = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        setup.fine.energy(&d).powi(2)
    };
    let lhs = gap(uh, &off.u);
    let rhs = gap(uh, &snap.u) + gap(&snap.u, &off.u);
    let r = rel(rhs, lhs);
    Ok((r <= 1e-8, format!("relative defect {r:.2e}, |u_h - u_off|^2 = {lhs:.6e}")))
}

fn explicit_constant_inequalities_hold() -> Outcome {
    let mut failed = Vec::new();
    let mut worst = (0.0f64, "");
    let mut recorded = (0.0f64, "");
    let mut count = 0;
    for name in ["unit", "one_disk", "four_disks"] {
        let cfg = config(name);
        let setup = cfg.setup(cfg.mesh.coarse_sizes[0], cfg.coefficient.contrast)?;
        let consts = measure_constants(&setup)?;
        for c in inequality_suite(&setup, &consts, &[2, 4, 8])? {
            if c.recorded {
                if c.ratio() > recorded.0 {
                    recorded = (c.ratio(), c.name);
                }
                continue;
            }
            count += 1;
            if c.ratio() > worst.0 {
                worst = (c.ratio(), c.name);
            }
            if !c.holds(0.05) {
                failed.push(format!("{name}:{}@{:?}/ell={}", c.name, c.nbhd, c.ell));
            }
        }
    }
    let detail = format!(
        "{count} checks, worst ratio {:.3} ({}); recorded only: worst ratio {:.3} ({})",
        worst.0, worst.1, recorded.0, recorded.1
    );
    if failed.is_empty() {
        Ok((true, detail))
    } else {
        Ok((false, format!("{detail}; failing: {}", failed.join(", "))))
    }
}

fn spectral_space_converges_linearly_in_h() -> Outcome {
    let mut cfg = config("study_unit");
    cfg.spaces.kinds = vec!["S".into()];
    cfg.output.timing = false;
    let study = convergence_study(&cfg)?;
    let fit = study.rates.iter().find(|r| r.kind == SpaceKind::S).unwrap();
    let errors: Vec<String> = study
        .reports
        .iter()
        .map(|r| format!("H={} e={:.3e} H²λ={:.2}", r.coarse_size, r.energy_error, r.coarse_size.powi(2) * r.min_lambda_s))
        .collect();
    let budgets = study.reports.iter().all(|r| r.coarse_size.powi(2) * r.min_lambda_s >= 1.0);
    Ok((fit.slope >= 0.8 && budgets, format!("slope {:.3}; {}", fit.slope, errors.join("; "))))
}

fn constants_are_contrast_robust() -> Outcome {
    let cfg = config("one_disk");
    let contrasts = [1.0, 1e2, 1e4, 1e6];
    let mut local = Vec::new();
    let mut domain = Vec::new();
    for &c in &contrasts {
        let setup = cfg.setup(cfg.mesh.coarse_sizes[0], c)?;
        let consts = measure_constants(&setup)?;
        local.push(consts.c_poin_max());
        domain.push(consts.c_poin_domain);
    }
    let base = cfg.setup(cfg.mesh.coarse_sizes[0], cfg.coefficient.contrast)?;
    let nbhd = cfg.appendix_neighborhood(&base.mesh)?;
    let a = &cfg.appendix;
    let (_, summary) = appendix_stability_sweep(&base, nbhd, &contrasts, a.random_traces, a.frequencies, cfg.seed)?;
    let ratios: Vec<f64> = summary.iter().map(|s| s.max_ratio).collect();
    let (sl, sd, sr) = (spread(&local), spread(&domain), spread(&ratios));
    Ok((
        sl <= 3.0 && sd <= 3.0 && sr <= 3.0,
        format!(
            "spread C_poin max {sl:.3} [{}], C_poin(D) {sd:.3} [{}], trace ratio {sr:.3} [{}]",
            list(&local),
            list(&domain),
            list(&ratios)
        ),
    ))
}

fn pod_truncation_matches_parseval_tail() -> Outcome {
    let cfg = config("one_disk");
    let setup = cfg.setup(cfg.mesh.coarse_sizes[0], cfg.coefficient.contrast)?;
    let snaps = build_all_snapshots(&setup)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let i = rng.random_range(0..snaps.len());
        let snap = &snaps[i];
        let ell = rng.random_range(1..snap.len());
        let pod = pod_reduce(snap, &setup.locals[i], ell)?;
        let a: Vec<f64> = (0..snap.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let (direct, tail) = pod_truncation_errors(&pod, snap, &setup.locals[i].mass_tilde, ell, &a);
        worst = worst.max(rel(direct, tail));
    }
    Ok((worst <= 1e-9, format!("max relative gap {worst:.2e}")))
}

fn csv_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "dat"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn repeated_runs_are_byte_identical() -> Outcome {
    let scratch = std::env::temp_dir().join(format!("gmsfem-acceptance-{}", std::process::id()));
    let runs = [
        ("unit", "solve"),
        ("one_disk", "solve"),
        ("two_disks", "solve"),
        ("four_disks", "solve"),
        ("one_disk", "spectra"),
        ("one_disk", "appendix"),
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for (name, cmd) in runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = scratch.join(format!("{name}-{cmd}-{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_gmsfem"))
                .arg(cmd)
                .arg("--config")
                .arg(root().join("configs").join(format!("{name}.toml")))
                .arg("--out")
                .arg(&out)
                .status()?;
            if !status.success() {
                return Ok((false, format!("{cmd} {name} exited with {status}")));
            }
            outputs.push(csv_outputs(&out));
        }
        files += outputs[0].len();
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            differing.push(format!("{cmd} {name}"));
        }
    }
    let _ = fs::remove_dir_all(&scratch);
    if differing.is_empty() {
        Ok((true, format!("{} runs, {files} files compared", runs.len())))
    } else {
        Ok((false, format!("differing outputs: {}", differing.join(", "))))
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("unit conductivity reduces to hats and weight four", 5.0, unit_conductivity_reduces_to_hats),
        ("local eigenvalues match closed forms", 30.0, eigenvalues_match_closed_forms),
        ("pythagorean identity on two disks", 60.0, pythagorean_identity_on_two_disks),
        ("explicit-constant inequalities hold", 300.0, explicit_constant_inequalities_hold),
        ("spectral space converges linearly in H", 600.0, spectral_space_converges_linearly_in_h),
        ("constants are contrast robust", 300.0, constants_are_contrast_robust),
        ("POD truncation matches the Parseval tail", 30.0, pod_truncation_matches_parseval_tail),
        ("repeated runs are byte identical", f64::INFINITY, repeated_runs_are_byte_identical),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, limit, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && secs < limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        let budget = if limit.is_finite() { format!("/{limit:.0}s") } else { String::new() };
        println!("{} {name} [{secs:.1}s{budget}]: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
