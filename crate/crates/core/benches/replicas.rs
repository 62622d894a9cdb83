use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use regraph::flowgraph::decompose_all;
use regraph::parallel::{map_replicas, Execution};
use regraph::rfa::compute_rfa;
use regraph::topology::grow;
use regraph::{Domain, RandomSource};

fn replica(rng: &RandomSource, n: usize, i: usize) -> usize {
    let rng = rng.derive(Domain::Replica, n as u64, i as u64);
    let net = grow(n, 2, &rng).unwrap();
    let st = compute_rfa(&net, 0.5, &rng).unwrap();
    let (_, decomps) = decompose_all(&net, &st).unwrap();
    decomps.iter().map(|d| d.disconnected_count()).sum()
}

fn bench_replicas(c: &mut Criterion) {
    let rng = RandomSource::new(1);
    let mut group = c.benchmark_group("replicas");
    group.sample_size(10);
    for n in [1_000usize, 10_000] {
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| map_replicas(exec, 32, |i| replica(&rng, n, i)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_replicas);
criterion_main!(benches);
