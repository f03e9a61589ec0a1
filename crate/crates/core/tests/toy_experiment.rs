use sworgrad::experiment::{
    optimize, sample_variance, variance_sweep, BernoulliToy, GradientSource, OptConfig, SweepConfig,
};
use sworgrad::oracle::estimator_moments;
use sworgrad::{Estimator, EstimatorKind, Target};

fn exact_variance(toy: &BernoulliToy, kind: EstimatorKind, eta: f64, k: usize) -> f64 {
    let dist = toy.dist(eta).unwrap();
    let f = toy.objective().unwrap();
    let score = toy.score(eta);
    let est = Estimator::new(&dist, &f).unwrap().with_score(&score).unwrap();
    estimator_moments(&est, kind, Target::Gradient, k).unwrap().variance
}

#[test]
fn exact_gradient_matches_finite_differences() {
    let toy = BernoulliToy::default();
    for eta in [-4.0, -1.0, 0.0, 0.7, 3.0] {
        let fd = (toy.loss(eta + 1e-5).unwrap() - toy.loss(eta - 1e-5).unwrap()) / 2e-5;
        assert!((toy.exact_grad(eta).unwrap() - fd).abs() < 1e-6, "eta={eta}");
    }
}

#[test]
fn baselines_vanish_for_constant_objective() {
    // (x - 1/2)^2 = 1/4 for either bit value, so f is constant
    let toy = BernoulliToy::new(vec![0.5, 0.5, 0.5]).unwrap();
    for kind in [
        EstimatorKind::UnorderedSetPGBaseline,
        EstimatorKind::ReinforceWRBaseline,
        EstimatorKind::ReinforceSampledBaseline,
    ] {
        for eta in [0.0, -4.0] {
            assert!(exact_variance(&toy, kind, eta, 2) < 1e-25, "{kind}");
            let mut rng = sworgrad::sampling::seeded_rng(3);
            let g = sworgrad::experiment::toy_scalar_grad(&toy, kind, eta, 2, &mut rng).unwrap();
            assert!(g.abs() < 1e-15);
        }
    }
}

#[test]
fn empirical_variance_matches_enumeration() {
    let toy = BernoulliToy::default();
    let cells = [
        (EstimatorKind::SingleSample, 1),
        (EstimatorKind::UnorderedSet, 2),
        (EstimatorKind::UnorderedSet, 4),
        (EstimatorKind::UnorderedSetPGBaseline, 3),
        (EstimatorKind::StochSumAndSample(1), 3),
        (EstimatorKind::DetSumAndSample, 3),
        (EstimatorKind::ReinforceWR, 2),
        (EstimatorKind::ReinforceWRBaseline, 2),
        (EstimatorKind::ReinforceSampledBaseline, 2),
    ];
    let replications = 100_000;
    for eta in [0.0, -4.0] {
        for &(kind, k) in &cells {
            let dist = toy.dist(eta).unwrap();
            let f = toy.objective().unwrap();
            let score = toy.score(eta);
            let est = Estimator::new(&dist, &f).unwrap().with_score(&score).unwrap();
            let grads: Vec<f64> = (0..replications)
                .map(|r| est.estimate(kind, k, &mut sworgrad::sampling::stream_rng(0, r)).unwrap().grad[0])
                .collect();
            let var = sample_variance(&grads);
            let mean = grads.iter().sum::<f64>() / grads.len() as f64;
            let m4 = grads.iter().map(|g| (g - mean).powi(4)).sum::<f64>() / grads.len() as f64;
            let se = ((m4 - var * var) / replications as f64).sqrt();
            let exact = exact_variance(&toy, kind, eta, k);
            assert!((var - exact).abs() <= 3.0 * se, "{kind} k={k} eta={eta}: {var} vs {exact} (se {se})");
        }
    }
}

#[test]
fn low_entropy_built_in_baseline_beats_replacement_baseline() {
    let toy = BernoulliToy::default();
    for k in [2, 4] {
        let uspg = exact_variance(&toy, EstimatorKind::UnorderedSetPGBaseline, -4.0, k);
        let rwr = exact_variance(&toy, EstimatorKind::ReinforceWRBaseline, -4.0, k);
        assert!(uspg <= rwr, "k={k}: {uspg} > {rwr}");
    }
}

#[test]
fn full_domain_sweep_has_zero_variance() {
    let cfg = SweepConfig {
        estimators: vec![EstimatorKind::UnorderedSet, EstimatorKind::UnorderedSetPGBaseline],
        k: vec![8],
        eta: vec![0.0, -4.0],
        replications: 1000,
        seed: 5,
        out: None,
        target_p: None,
    };
    let report = variance_sweep(&cfg).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert!(report.rows.iter().all(|r| r.variance == 0.0 && r.evals == 8));
}

#[test]
fn exact_descent_reaches_the_infimum() {
    // L decreases in sigma, so the infimum over (0, 1) is the limit at sigma = 1
    let toy = BernoulliToy::default();
    let inf = toy.target_p.iter().map(|p| (1.0 - p) * (1.0 - p)).sum::<f64>();
    let grid_min = (0..=100_000).map(|i| toy.loss_closed_form(-30.0 + 60.0 * i as f64 / 1e5)).fold(f64::MAX, f64::min);
    assert!((grid_min - inf).abs() < 1e-9);
    let run = optimize(&toy, &OptConfig { step_size: 1000.0, steps: 2000, ..Default::default() }).unwrap();
    assert!(!run.diverged);
    assert!(run.trajectory.windows(2).all(|w| w[1].loss <= w[0].loss));
    assert!(run.final_loss() - inf < 1e-6, "{}", run.final_loss() - inf);
}

#[test]
fn full_domain_descent_is_bitwise_exact() {
    let toy = BernoulliToy::default();
    let exact = optimize(&toy, &OptConfig::default()).unwrap();
    for seed in [0, 9] {
        let cfg = OptConfig {
            source: GradientSource::Estimator(EstimatorKind::UnorderedSet),
            k: 8,
            seed,
            ..Default::default()
        };
        let run = optimize(&toy, &cfg).unwrap();
        assert_eq!(run.trajectory.len(), exact.trajectory.len());
        assert!(exact.trajectory.iter().zip(&run.trajectory).all(|(a, b)| a.eta.to_bits() == b.eta.to_bits()));
    }
}
