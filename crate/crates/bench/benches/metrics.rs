use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use faithcheck_bench::population;
use faithcheck_core::metrics::{cmfg, faithfulness, mfg};
use faithcheck_core::rng::DetRng;
use faithcheck_core::simlab::{metric_oracle, simulate, ConfidenceDist, Policy, SyntheticAgent};

fn bench_faithfulness(c: &mut Criterion) {
    let mut rng = DetRng::new(1);
    let pairs: Vec<(f64, f64)> = (0..64).map(|_| (rng.next_f64(), rng.next_f64())).collect();
    c.bench_function("faithfulness/64-assertions", |b| {
        b.iter(|| faithfulness(black_box(&pairs)).unwrap())
    });
}

fn bench_aggregates(c: &mut Criterion) {
    let mut group = c.benchmark_group("aggregates");
    for n in [1_000usize, 10_000, 100_000] {
        let pop = population(n, 7);
        group.bench_with_input(BenchmarkId::new("mfg", n), &pop, |b, pop| {
            b.iter(|| mfg(black_box(pop)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("cmfg", n), &pop, |b, pop| {
            b.iter(|| cmfg(black_box(pop)).unwrap().cmfg)
        });
        group.bench_with_input(BenchmarkId::new("oracle", n), &pop, |b, pop| {
            b.iter(|| metric_oracle(black_box(pop)).unwrap())
        });
    }
    group.finish();
}

fn bench_simulation(c: &mut Criterion) {
    c.bench_function("simulate/decisive-uniform-10k", |b| {
        b.iter(|| {
            let agent = SyntheticAgent::new(
                ConfidenceDist::Uniform,
                Policy::Decisive,
                10_000,
                black_box(3),
            );
            simulate(&agent)
        })
    });
}

criterion_group!(
    benches,
    bench_faithfulness,
    bench_aggregates,
    bench_simulation
);
criterion_main!(benches);
