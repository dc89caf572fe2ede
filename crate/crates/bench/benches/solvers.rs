use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fgwmixup::augment::discretize_adjacency;
use fgwmixup::barycenter::{solve_mixup, MixupProblem};
use fgwmixup::fgw::{solve_fgw_relaxed, solve_fgw_strict, FgwConfig};
use fgwmixup_bench::graph_pair;

fn fgw_solvers(c: &mut Criterion) {
    let cfg = FgwConfig::default();
    let mut group = c.benchmark_group("fgw");
    for n in [10usize, 20, 40] {
        let (g1, g2) = graph_pair(n, n, 1);
        group.bench_with_input(BenchmarkId::new("strict", n), &n, |b, _| {
            b.iter(|| solve_fgw_strict(&g1, &g2, &cfg, None).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("relaxed", n), &n, |b, _| {
            b.iter(|| solve_fgw_relaxed(&g1, &g2, &cfg, None).unwrap())
        });
    }
    group.finish();
}

fn mixup(c: &mut Criterion) {
    let (g1, g2) = graph_pair(15, 25, 2);
    let size = (g1.num_nodes() + g2.num_nodes()) / 2;
    let problem = MixupProblem::new(g1, g2, 0.5, size).unwrap();
    let mut group = c.benchmark_group("mixup");
    group.sample_size(10);
    group.bench_function("strict", |b| b.iter(|| solve_mixup(&problem, false).unwrap()));
    group.bench_function("accelerated", |b| b.iter(|| solve_mixup(&problem, true).unwrap()));
    group.finish();
}

fn discretize(c: &mut Criterion) {
    let (g1, g2) = graph_pair(30, 30, 3);
    let problem = MixupProblem::new(g1.clone(), g2.clone(), 0.4, 30).unwrap();
    let structure = solve_mixup(&problem, true).unwrap().graph.structure().clone();
    c.bench_function("discretize_30", |b| {
        b.iter(|| discretize_adjacency(&structure, g1.edge_density(), g2.edge_density(), 0.4, 101).unwrap())
    });
}

criterion_group!(benches, fgw_solvers, mixup, discretize);
criterion_main!(benches);
