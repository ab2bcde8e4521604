use criterion::{criterion_group, criterion_main, Criterion};
use stagecast_bench::fixture;
use stagecast_core::solver::solve;

fn solver_vs_surrogate(c: &mut Criterion) {
    let f = fixture(20, 400);
    let mut group = c.benchmark_group("station_grid");
    group.sample_size(10);
    group.bench_function("reference_solver", |b| {
        b.iter(|| solve(&f.scenario, &f.config).unwrap())
    });
    group.bench_function("surrogate_inference", |b| {
        b.iter(|| f.model.predict_batch(&f.points).unwrap())
    });
    group.bench_function("surrogate_partials", |b| {
        b.iter(|| f.model.partials_batch(&f.points).unwrap())
    });
    group.finish();
}

criterion_group!(benches, solver_vs_surrogate);
criterion_main!(benches);
