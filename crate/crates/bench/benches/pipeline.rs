use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use sysid_bench::{reference_config, reference_system, reference_trajectory};
use sysid_core::complexity::{self, build_cv};
use sysid_core::pipeline::{chain_family, full_family};
use sysid_core::selector::{self, Strategy};
use sysid_core::{naive_infer, proposed_infer, simulate};

fn bench_simulate(c: &mut Criterion) {
    let (sys, noise) = reference_system();
    c.bench_function("simulate_61", |b| b.iter(|| simulate(&sys, &noise, black_box(61), 7, false).unwrap()));
}

fn bench_estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimators");
    for &p in &[10usize, 30, 60] {
        let traj = reference_trajectory(p + 1, 11);
        let chain = chain_family(1, p).unwrap();
        let full = full_family(1, p).unwrap();
        group.bench_with_input(BenchmarkId::new("proposed_chain", p), &p, |b, _| {
            b.iter(|| proposed_infer(&traj, &chain).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("proposed_full", p), &p, |b, _| {
            b.iter(|| proposed_infer(&traj, &full).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("naive", p), &p, |b, &p| {
            b.iter(|| naive_infer(&traj, 1, p + 1).unwrap())
        });
    }
    group.finish();
}

fn bench_bounds(c: &mut Criterion) {
    let cfg = reference_config(8);
    let fam = full_family(1, 8).unwrap();
    let v = cfg.variances();
    c.bench_function("build_cv_full_8", |b| b.iter(|| build_cv(&fam, 4, &v)));
    c.bench_function("cv_norm_full_8", |b| b.iter(|| complexity::cv_norm(&fam, 4, &v)));
    let small = reference_config(4);
    c.bench_function("select_exhaustive_4", |b| {
        b.iter(|| selector::select(&small, Strategy::Exhaustive, 12).unwrap())
    });
}

criterion_group!(benches, bench_simulate, bench_estimators, bench_bounds);
criterion_main!(benches);
