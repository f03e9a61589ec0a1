use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sworgrad::experiment::{variance_sweep, SweepConfig};
use sworgrad::sampling::{gumbel_top_k, seeded_rng};
use sworgrad::{Estimator, EstimatorKind};
use sworgrad_bench::{random_dist, random_objective};

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("gumbel_top_k");
    for n in [100, 10_000] {
        let dist = random_dist(n, 3);
        let mut rng = seeded_rng(3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &dist, |b, d| b.iter(|| gumbel_top_k(&mut rng, d, 10)));
    }
    group.finish();
}

fn estimates(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate");
    let dist = random_dist(100, 4);
    let f = random_objective(100, 4);
    let score = dist.softmax_score().unwrap();
    let est = Estimator::new(&dist, &f).unwrap().with_score(&score).unwrap();
    for kind in [
        EstimatorKind::UnorderedSetPG,
        EstimatorKind::UnorderedSetPGBaseline,
        EstimatorKind::IwpgBaseline,
        EstimatorKind::ReinforceWRBaseline,
    ] {
        for k in [4, 8] {
            let mut rng = seeded_rng(4);
            group.bench_function(BenchmarkId::new(kind.to_string(), k), |b| b.iter(|| est.estimate(kind, k, &mut rng)));
        }
    }
    group.finish();
}

fn toy_sweep(c: &mut Criterion) {
    let cfg = SweepConfig::from_json(
        r#"{"estimators": ["unordered-set-pg-bl", "reinforce-wr-bl"], "k": [2, 4], "eta": [0, -4], "replications": 1000}"#,
    )
    .unwrap();
    c.bench_function("toy_variance_sweep", |b| b.iter(|| variance_sweep(&cfg)));
}

criterion_group!(benches, sampling, estimates, toy_sweep);
criterion_main!(benches);
