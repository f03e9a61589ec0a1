use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sworgrad::setprob::{log_p_set_exact, log_p_set_integral, log_p_set_naive, loo_ratios, Backend, SetProbConfig};
use sworgrad_bench::{first_k, random_dist};

fn backends(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_p_set");
    let dist = random_dist(50, 1);
    for k in [2, 4, 6, 8] {
        let set = first_k(k);
        group.bench_with_input(BenchmarkId::new("naive", k), &set, |b, s| b.iter(|| log_p_set_naive(&dist, s)));
    }
    for k in [2, 4, 8, 12, 16] {
        let set = first_k(k);
        group.bench_with_input(BenchmarkId::new("exact", k), &set, |b, s| b.iter(|| log_p_set_exact(&dist, s, &[])));
    }
    for k in [2, 8, 16, 32] {
        let set = first_k(k);
        let cfg = Default::default();
        group.bench_with_input(BenchmarkId::new("integral", k), &set, |b, s| {
            b.iter(|| log_p_set_integral(&dist, s, &[], &cfg))
        });
    }
    group.finish();
}

fn ratios(c: &mut Criterion) {
    let mut group = c.benchmark_group("loo_ratios");
    let dist = random_dist(50, 2);
    for k in [4, 8, 12] {
        let set = first_k(k);
        for (name, backend) in [("exact", Backend::Exact), ("integral", Backend::Integral)] {
            let cfg = SetProbConfig::with_backend(backend);
            group.bench_with_input(BenchmarkId::new(format!("{name}/order2"), k), &set, |b, s| {
                b.iter(|| loo_ratios(&dist, s, 2, &cfg))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, backends, ratios);
criterion_main!(benches);
