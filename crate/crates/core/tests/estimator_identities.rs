use proptest::prelude::*;
use rand::Rng;
use sworgrad::estimators::{reinforce_wr, risk_grad, uspg_baseline, RiskForm};
use sworgrad::oracle::{
    enumerate_ordered, enumerate_unordered, estimator_moments, exact_expectation, exact_logit_gradient, posterior_b1,
};
use sworgrad::sampling::{gumbel_top_k, seeded_rng};
use sworgrad::setprob::{log_p_set_exact, log_p_set_integral, log_p_set_naive, loo_ratios, Backend, SetProbConfig};
use sworgrad::{CategoricalDist, Draw, Estimator, EstimatorKind, Objective, Target, Threshold};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

/// Logits, objective values and a sample size with `k <= n`.
fn problem(max_n: usize, max_k: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (2..=max_n).prop_flat_map(move |n| {
        (prop::collection::vec(-3.0f64..3.0, n), prop::collection::vec(-5.0f64..5.0, n), 1..=max_k.min(n))
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn value_kinds(k: usize) -> Vec<EstimatorKind> {
    let mut kinds = vec![EstimatorKind::UnorderedSet];
    kinds.extend((1..k).map(EstimatorKind::StochSumAndSample));
    if k >= 2 {
        kinds.push(EstimatorKind::DetSumAndSample);
    }
    if k == 1 {
        kinds.push(EstimatorKind::SingleSample);
    }
    kinds
}

fn unbiased_gradient_kinds(k: usize) -> Vec<EstimatorKind> {
    let mut kinds =
        vec![EstimatorKind::UnorderedSetPG, EstimatorKind::ReinforceWR, EstimatorKind::ReinforceSampledBaseline];
    if k >= 2 {
        kinds.extend([EstimatorKind::UnorderedSetPGBaseline, EstimatorKind::ReinforceWRBaseline]);
    }
    kinds
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn enumeration_means_are_unbiased((logits, values, k) in problem(5, 3)) {
        let dist = CategoricalDist::from_logits(logits).unwrap();
        let f = Objective::new(values).unwrap();
        let score = dist.softmax_score().unwrap();
        let est = Estimator::new(&dist, &f).unwrap().with_score(&score).unwrap();
        let truth = exact_expectation(&dist, &f).unwrap();
        for kind in value_kinds(k) {
            let m = estimator_moments(&est, kind, Target::Value, k).unwrap();
            prop_assert!((m.mean[0] - truth).abs() < 1e-9, "{kind}: {} vs {truth}", m.mean[0]);
        }
        let grad = exact_logit_gradient(&dist, &f).unwrap();
        for kind in unbiased_gradient_kinds(k) {
            let m = estimator_moments(&est, kind, Target::Gradient, k).unwrap();
            prop_assert!(max_abs_diff(&m.mean, &grad) < 1e-9, "{kind}");
        }
    }

    #[test]
    fn full_policy_gradient_includes_pathwise_term(
        (logits, values, k) in problem(5, 3),
        seed in any::<u64>(),
    ) {
        let n = logits.len();
        let mut rng = seeded_rng(seed);
        let grads: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let dist = CategoricalDist::from_logits(logits).unwrap();
        let f = Objective::new(values).unwrap().with_param_grad(grads).unwrap();
        let score = dist.softmax_score().unwrap();
        let est = Estimator::new(&dist, &f).unwrap().with_score(&score).unwrap();
        let m = estimator_moments(&est, EstimatorKind::FullUnorderedSetPG, Target::Gradient, k).unwrap();
        prop_assert!(max_abs_diff(&m.mean, &exact_logit_gradient(&dist, &f).unwrap()) < 1e-9);
    }

    #[test]
    fn gradient_means_match_finite_differences((logits, values, k) in problem(5, 3)) {
        let f = Objective::new(values).unwrap();
        let dist = CategoricalDist::from_logits(logits.clone()).unwrap();
        let score = dist.softmax_score().unwrap();
        let est = Estimator::new(&dist, &f).unwrap().with_score(&score).unwrap();
        let fd: Vec<f64> = (0..logits.len())
            .map(|i| {
                let at = |h: f64| {
                    let mut l = logits.clone();
                    l[i] += h;
                    exact_expectation(&CategoricalDist::from_logits(l).unwrap(), &f).unwrap()
                };
                (at(1e-5) - at(-1e-5)) / 2e-5
            })
            .collect();
        for kind in unbiased_gradient_kinds(k) {
            let m = estimator_moments(&est, kind, Target::Gradient, k).unwrap();
            prop_assert!(max_abs_diff(&m.mean, &fd) < 1e-6, "{kind}");
        }
    }

    #[test]
    fn unordered_set_has_least_variance((logits, values, k) in problem(5, 3)) {
        prop_assume!(k >= 2);
        let dist = CategoricalDist::from_logits(logits).unwrap();
        let f = Objective::new(values).unwrap();
        let est = Estimator::new(&dist, &f).unwrap();
        let us = estimator_moments(&est, EstimatorKind::UnorderedSet, Target::Value, k).unwrap().variance;
        let single = estimator_moments(&est, EstimatorKind::SingleSample, Target::Value, 1).unwrap().variance;
        prop_assert!(us <= single + 1e-10);
        for m in 1..k {
            let sas = estimator_moments(&est, EstimatorKind::StochSumAndSample(m), Target::Value, k).unwrap().variance;
            prop_assert!(us <= sas + 1e-10, "m={m}: {us} > {sas}");
        }
        let iw = estimator_moments(&est, EstimatorKind::ImportanceWeighted, Target::Value, k).unwrap().variance;
        prop_assert!(us <= iw + 1e-10, "{us} > {iw}");
    }

    #[test]
    fn risk_forms_are_identical((logits, values, k) in problem(6, 4)) {
        let dist = CategoricalDist::from_logits(logits).unwrap();
        let f = Objective::new(values).unwrap();
        for (set, _) in enumerate_unordered(&dist, k).unwrap().entries {
            let direct = risk_grad(&dist, &set, &f, RiskForm::Direct).unwrap();
            let baseline = risk_grad(&dist, &set, &f, RiskForm::Baseline).unwrap();
            prop_assert!(max_abs_diff(&direct, &baseline) < 1e-10);
        }
    }

    #[test]
    fn baselines_ignore_constant_shifts(
        (logits, values, k) in problem(6, 4),
        c in -10.0f64..10.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(k >= 2);
        let dist = CategoricalDist::from_logits(logits).unwrap();
        let f = Objective::new(values).unwrap();
        let g = f.shifted(c);
        for (set, _) in enumerate_unordered(&dist, k).unwrap().entries {
            let a = uspg_baseline(&dist, &set, &f).unwrap();
            let b = uspg_baseline(&dist, &set, &g).unwrap();
            prop_assert!(max_abs_diff(&a, &b) < 1e-9);
            for form in [RiskForm::Direct, RiskForm::Baseline] {
                let a = risk_grad(&dist, &set, &f, form).unwrap();
                let b = risk_grad(&dist, &set, &g, form).unwrap();
                prop_assert!(max_abs_diff(&a, &b) < 1e-9);
            }
        }
        let mut rng = seeded_rng(seed);
        let x: Vec<usize> = (0..k).map(|_| rng.random_range(0..dist.len())).collect();
        let a = reinforce_wr(&dist, &x, &f, true).unwrap();
        let b = reinforce_wr(&dist, &x, &g, true).unwrap();
        prop_assert!(max_abs_diff(&a, &b) < 1e-9);
    }

    #[test]
    fn aggregated_orderings_match_every_backend(
        logits in prop::collection::vec(-3.0f64..3.0, 1..=8),
        k in 1usize..=4,
    ) {
        let dist = CategoricalDist::from_logits(logits).unwrap();
        prop_assume!(k <= dist.len());
        let space = enumerate_unordered(&dist, k).unwrap();
        prop_assert!((space.total - 1.0).abs() < 1e-10);
        for (set, p) in &space.entries {
            let s = set.indices();
            for lp in [
                log_p_set_naive(&dist, s).unwrap(),
                log_p_set_exact(&dist, s, &[]).unwrap(),
                log_p_set_integral(&dist, s, &[], &Default::default()).unwrap(),
            ] {
                prop_assert!((lp.exp() - p).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn posterior_matches_enumerated_first_elements(
        logits in prop::collection::vec(-3.0f64..3.0, 2..=6),
        k in 1usize..=4,
    ) {
        let dist = CategoricalDist::from_logits(logits).unwrap();
        prop_assume!(k <= dist.len());
        let ordered = enumerate_ordered(&dist, k).unwrap();
        for (set, p_set) in enumerate_unordered(&dist, k).unwrap().entries {
            let post = posterior_b1(&dist, &set).unwrap();
            prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for (i, &s) in set.indices().iter().enumerate() {
                let first: f64 = ordered
                    .entries
                    .iter()
                    .filter(|(b, _)| b.indices()[0] == s && b.to_unordered() == set)
                    .map(|(_, p)| p)
                    .sum();
                prop_assert!((first / p_set - post[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn top_k_samples_are_distinct_and_above_threshold(
        logits in prop::collection::vec(-20.0f64..20.0, 1..30),
        k in 1usize..30,
        seed in any::<u64>(),
    ) {
        let dist = CategoricalDist::from_logits(logits).unwrap();
        prop_assume!(k <= dist.len());
        let (sample, threshold) = gumbel_top_k(&mut seeded_rng(seed), &dist, k).unwrap();
        let mut idx = sample.indices().to_vec();
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), k);
        match threshold {
            Threshold::Kappa(kappa) => {
                prop_assert!(k < dist.len());
                prop_assert!(sample.perturbed().unwrap().iter().all(|&g| kappa < g));
            }
            Threshold::WholeDomain => prop_assert_eq!(k, dist.len()),
        }
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn threshold_estimators_are_unbiased((logits, values, k) in problem(5, 3)) {
        prop_assume!(k >= 2);
        let dist = CategoricalDist::from_logits(logits).unwrap();
        let f = Objective::new(values).unwrap();
        let score = dist.softmax_score().unwrap();
        let est = Estimator::new(&dist, &f).unwrap().with_score(&score).unwrap();
        let iw = estimator_moments(&est, EstimatorKind::ImportanceWeighted, Target::Value, k).unwrap();
        prop_assert!((iw.mean[0] - exact_expectation(&dist, &f).unwrap()).abs() < 1e-6);
        let grad = exact_logit_gradient(&dist, &f).unwrap();
        for kind in [EstimatorKind::ImportanceWeighted, EstimatorKind::IwpgBaseline] {
            let m = estimator_moments(&est, kind, Target::Gradient, k).unwrap();
            prop_assert!(max_abs_diff(&m.mean, &grad) < 1e-6, "{kind}");
        }
    }
}

#[test]
fn biased_estimators_are_flagged_and_differ() {
    let dist = CategoricalDist::from_probs(&[0.5, 0.3, 0.2]).unwrap();
    let f = Objective::new(vec![1.0, 2.0, 3.0]).unwrap();
    let score = dist.softmax_score().unwrap();
    let est = Estimator::new(&dist, &f).unwrap().with_score(&score).unwrap();
    let grad = exact_logit_gradient(&dist, &f).unwrap();
    for kind in [EstimatorKind::Risk, EstimatorKind::IwpgNormalized] {
        assert!(!kind.is_unbiased());
        let m = estimator_moments(&est, kind, Target::Gradient, 2).unwrap();
        assert!(max_abs_diff(&m.mean, &grad) > 1e-3, "{kind}");
    }
}

#[test]
fn every_backend_serves_the_estimators() {
    let dist = CategoricalDist::from_logits(vec![0.2, -0.4, 1.1, 0.0, -2.0]).unwrap();
    let f = Objective::new(vec![1.0, -2.0, 0.5, 3.0, 1.5]).unwrap();
    let set = [0, 2, 3];
    let reference = loo_ratios(&dist, &set, 2, &SetProbConfig::with_backend(Backend::Naive)).unwrap();
    for backend in [Backend::Exact, Backend::Integral] {
        let lr = loo_ratios(&dist, &set, 2, &SetProbConfig::with_backend(backend)).unwrap();
        assert!(max_abs_diff(&lr.ratios, &reference.ratios) < 1e-8);
        let est = Estimator::new(&dist, &f).unwrap().with_config(SetProbConfig::with_backend(backend));
        let draw = Draw::Set(sworgrad::UnorderedSample::new(set.to_vec(), 5).unwrap());
        let base = Estimator::new(&dist, &f).unwrap().with_config(SetProbConfig::with_backend(Backend::Naive));
        let v = est.value(EstimatorKind::UnorderedSet, &draw).unwrap();
        assert!((v - base.value(EstimatorKind::UnorderedSet, &draw).unwrap()).abs() < 1e-8);
    }
}
