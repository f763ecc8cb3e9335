use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use otfuse_bench::{rng, transport_instance};
use otfuse_core::ot::exact_transport;
use otfuse_core::{sinkhorn, DiscreteDistribution, SinkhornConfig};

fn sinkhorn_sizes(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn");
    for (n, m) in [(64, 2), (64, 8), (256, 2), (1024, 2)] {
        for eps in [0.01, 0.05, 0.25] {
            let (mu, nu, cost) = transport_instance(&mut rng(1), n, m, 16);
            let cfg = SinkhornConfig::default().with_epsilon(eps);
            group.bench_with_input(BenchmarkId::new(format!("{n}x{m}"), eps), &cfg, |b, cfg| {
                b.iter(|| sinkhorn(&mu, &nu, &cost, cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn exact_oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact");
    for n in [3, 6] {
        let (_, _, cost) = transport_instance(&mut rng(2), n, n, 4);
        let mu = DiscreteDistribution::uniform(n).unwrap();
        group.bench_function(format!("{n}x{n}"), |b| b.iter(|| exact_transport(&mu, &mu, &cost).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, sinkhorn_sizes, exact_oracle);
criterion_main!(benches);
