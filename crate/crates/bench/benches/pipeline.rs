use criterion::{criterion_group, criterion_main, Criterion};
use gmsfem::global::SpaceKind;
use gmsfem::pipeline::{build_all_snapshots, build_pod, build_spectral, solve_kind, Budgets};
use gmsfem::{make_inclusions, Inclusion, MeshHierarchy, Setup};
use std::hint::black_box;

const SQUARE: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

fn setup() -> Setup {
    let mesh = MeshHierarchy::build(&SQUARE, 0.25, 3).unwrap();
    let kappa = make_inclusions(&mesh.fine, &[Inclusion::disk([0.4268, 0.3232], 0.05)], 1e4).unwrap();
    let n = mesh.fine.num_cells();
    Setup::new(mesh, kappa, vec![1.0; n]).unwrap()
}

fn offline(c: &mut Criterion) {
    let s = setup();
    let budgets = Budgets::default();
    let mut g = c.benchmark_group("offline");
    g.sample_size(10);
    g.bench_function("setup", |b| b.iter(setup));
    g.bench_function("spectral", |b| b.iter(|| build_spectral(black_box(&s), &budgets).unwrap()));
    g.bench_function("snapshots", |b| b.iter(|| build_all_snapshots(black_box(&s)).unwrap()));
    let snaps = build_all_snapshots(&s).unwrap();
    g.bench_function("pod", |b| b.iter(|| build_pod(black_box(&s), &snaps, &budgets).unwrap()));
    g.finish();
}

fn online(c: &mut Criterion) {
    let s = setup();
    let budgets = Budgets::default();
    let spectral = build_spectral(&s, &budgets).unwrap().members();
    let snaps = build_all_snapshots(&s).unwrap();
    let pods = build_pod(&s, &snaps, &budgets).unwrap();
    let pod = gmsfem::pipeline::pod_members(&pods);
    let mut g = c.benchmark_group("global");
    g.sample_size(10);
    g.bench_function("S", |b| b.iter(|| solve_kind(black_box(&s), SpaceKind::S, &spectral).unwrap()));
    g.bench_function("H", |b| b.iter(|| solve_kind(black_box(&s), SpaceKind::H, &pod).unwrap()));
    g.finish();
}

criterion_group!(benches, offline, online);
criterion_main!(benches);
