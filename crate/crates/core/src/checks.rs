//! Randomized checks of the estimator identities against the enumeration
//! oracle, reported per property.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{CategoricalDist, Objective};
use crate::error::{Error, Result};
use crate::estimators::{unordered_set_estimate, Draw, Estimator, EstimatorKind, RiskForm, Target};
use crate::oracle::{
    enumerate_ordered, enumerate_unordered, estimator_moments, exact_expectation, exact_logit_gradient,
    integrate_over_threshold, posterior_b1,
};
use crate::sampling::{stream_rng, OrderedSample, UnorderedSample};
use crate::setprob::{log_p_set_exact, log_p_set_integral, log_p_set_naive, IntegralConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Instance generator settings. Each case draws its domain size from `ns`
/// and its sample size from `ks`, capped at the domain size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub cases: usize,
    pub seed: u64,
    pub integral: IntegralConfig,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { ns: vec![3, 4, 5], ks: vec![2, 3], cases: 50, seed: 0, integral: IntegralConfig::default() }
    }
}

/// A random categorical problem with a pathwise-differentiable variant of
/// its objective.
#[derive(Debug, Clone)]
pub struct Instance {
    pub dist: CategoricalDist,
    pub f: Objective,
    pub f_pathwise: Objective,
    pub k: usize,
}

impl Instance {
    /// Logits and objective values uniform on `[-2, 2]` and `[-3, 3]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Result<Self> {
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let grads: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let f = Objective::new(values)?;
        Ok(Self { dist: CategoricalDist::from_logits(logits)?, f_pathwise: f.clone().with_param_grad(grads)?, f, k })
    }
}

/// The instances a config generates, one independent stream per case.
pub fn instances(cfg: &CheckConfig) -> Result<Vec<Instance>> {
    if cfg.ns.is_empty() || cfg.ks.is_empty() || cfg.ns.contains(&0) || cfg.ks.contains(&0) {
        return Err(Error::InvalidConfig("domain and sample sizes must be non-empty and positive".into()));
    }
    (0..cfg.cases)
        .map(|case| {
            let mut rng = stream_rng(cfg.seed, case as u64);
            let n = cfg.ns[rng.random_range(0..cfg.ns.len())];
            let k = cfg.ks[rng.random_range(0..cfg.ks.len())].min(n);
            Instance::random(&mut rng, n, k)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub description: String,
    pub passed: bool,
    /// Largest violation over all cases; for inequalities the largest
    /// excess of the left side over the right side.
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub schema_version: u32,
    pub config: CheckConfig,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

struct Check {
    name: &'static str,
    description: &'static str,
    tolerance: f64,
    run: fn(&Instance, &IntegralConfig) -> Result<f64>,
}

const CHECKS: [Check; 10] = [
    Check {
        name: "unbiased_value",
        description: "enumerated means of the value estimators equal E[f]",
        tolerance: 1e-9,
        run: unbiased_value,
    },
    Check {
        name: "unbiased_gradient",
        description: "enumerated means of the gradient estimators equal the exact gradient",
        tolerance: 1e-9,
        run: unbiased_gradient,
    },
    Check {
        name: "posterior_first_element",
        description: "P(b1 = s | S) from leave-one-out ratios equals the enumerated posterior",
        tolerance: 1e-10,
        run: posterior_first_element,
    },
    Check {
        name: "rao_blackwell_posterior",
        description: "sum_s P(b1 = s | S) f(s) equals the unordered set estimate",
        tolerance: 1e-10,
        run: rao_blackwell_posterior,
    },
    Check {
        name: "rao_blackwell_sum_and_sample",
        description: "stochastic sum-and-sample averaged over orderings of S equals the unordered set estimate",
        tolerance: 1e-10,
        run: rao_blackwell_sum_and_sample,
    },
    Check {
        name: "rao_blackwell_importance_weighted",
        description:
            "importance-weighted estimate integrated over the threshold given S equals the unordered set estimate",
        tolerance: 1e-6,
        run: rao_blackwell_importance_weighted,
    },
    Check {
        name: "variance_dominance",
        description: "unordered set variance is at most that of single-sample, sum-and-sample and importance-weighted",
        tolerance: 1e-10,
        run: variance_dominance,
    },
    Check {
        name: "control_variate_zero_mean",
        description: "the built-in baseline term has zero expectation",
        tolerance: 1e-10,
        run: control_variate_zero_mean,
    },
    Check {
        name: "risk_forms_agree",
        description: "direct and baseline forms of the RISK gradient agree on every set",
        tolerance: 1e-10,
        run: risk_forms_agree,
    },
    Check {
        name: "set_probability_backends",
        description: "naive, exact and integral log p(S) agree with the enumerated set probability (relative)",
        tolerance: 1e-8,
        run: set_probability_backends,
    },
];

/// Runs every check on the configured instances.
pub fn run_checks(cfg: &CheckConfig) -> Result<CheckReport> {
    let cases = instances(cfg)?;
    let checks = CHECKS
        .iter()
        .map(|check| {
            let errors: Vec<f64> =
                cases.par_iter().map(|inst| (check.run)(inst, &cfg.integral)).collect::<Result<_>>()?;
            let max_error = errors.iter().copied().fold(0.0, f64::max);
            let passed = errors.iter().all(|e| *e <= check.tolerance);
            Ok(CheckResult {
                name: check.name.into(),
                description: check.description.into(),
                passed,
                max_error,
                tolerance: check.tolerance,
                cases: cases.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = checks.iter().all(|c| c.passed);
    Ok(CheckReport { schema_version: REPORT_SCHEMA_VERSION, config: cfg.clone(), checks, passed })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn split_kinds(k: usize) -> impl Iterator<Item = EstimatorKind> {
    (1..k).map(EstimatorKind::StochSumAndSample)
}

fn unbiased_value(inst: &Instance, _: &IntegralConfig) -> Result<f64> {
    let truth = exact_expectation(&inst.dist, &inst.f)?;
    let est = Estimator::new(&inst.dist, &inst.f)?;
    let mut kinds = vec![EstimatorKind::UnorderedSet];
    kinds.extend(split_kinds(inst.k));
    if inst.k >= 2 {
        kinds.push(EstimatorKind::DetSumAndSample);
    }
    kinds.into_iter().try_fold(0.0, |acc, kind| {
        let m = estimator_moments(&est, kind, Target::Value, inst.k)?;
        Ok(f64::max(acc, (m.mean[0] - truth).abs()))
    })
}

fn unbiased_gradient(inst: &Instance, _: &IntegralConfig) -> Result<f64> {
    let score = inst.dist.softmax_score()?;
    let truth = exact_logit_gradient(&inst.dist, &inst.f)?;
    let est = Estimator::new(&inst.dist, &inst.f)?.with_score(&score)?;
    let mut kinds =
        vec![EstimatorKind::UnorderedSetPG, EstimatorKind::ReinforceWR, EstimatorKind::ReinforceSampledBaseline];
    if inst.k >= 2 {
        kinds.extend([EstimatorKind::UnorderedSetPGBaseline, EstimatorKind::ReinforceWRBaseline]);
    }
    let mut worst: f64 = 0.0;
    for kind in kinds {
        worst = worst.max(max_abs_diff(&estimator_moments(&est, kind, Target::Gradient, inst.k)?.mean, &truth));
    }
    let path_truth = exact_logit_gradient(&inst.dist, &inst.f_pathwise)?;
    let path_est = Estimator::new(&inst.dist, &inst.f_pathwise)?.with_score(&score)?;
    let full = estimator_moments(&path_est, EstimatorKind::FullUnorderedSetPG, Target::Gradient, inst.k)?;
    Ok(worst.max(max_abs_diff(&full.mean, &path_truth)))
}

/// Enumerated orderings grouped by their set, in the order of
/// [`enumerate_unordered`].
type OrderingsBySet = Vec<(UnorderedSample, Vec<(OrderedSample, f64)>)>;

fn orderings_by_set(inst: &Instance) -> Result<OrderingsBySet> {
    let sets = enumerate_unordered(&inst.dist, inst.k)?;
    let mut groups: Vec<(UnorderedSample, Vec<(OrderedSample, f64)>)> =
        sets.entries.into_iter().map(|(s, _)| (s, Vec::new())).collect();
    for (b, p) in enumerate_ordered(&inst.dist, inst.k)?.entries {
        let s = b.to_unordered();
        let idx = groups.binary_search_by(|(g, _)| g.cmp(&s)).expect("every ordering has its set");
        groups[idx].1.push((b, p));
    }
    Ok(groups)
}

fn posterior_first_element(inst: &Instance, _: &IntegralConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (set, orderings) in orderings_by_set(inst)? {
        let total: f64 = orderings.iter().map(|(_, p)| p).sum();
        let post = posterior_b1(&inst.dist, &set)?;
        for (i, &s) in set.indices().iter().enumerate() {
            let first: f64 = orderings.iter().filter(|(b, _)| b.indices()[0] == s).map(|(_, p)| p).sum();
            worst = worst.max((first / total - post[i]).abs());
        }
    }
    Ok(worst)
}

fn rao_blackwell_posterior(inst: &Instance, _: &IntegralConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (set, _) in enumerate_unordered(&inst.dist, inst.k)?.entries {
        let post = posterior_b1(&inst.dist, &set)?;
        let weighted: f64 = set.indices().iter().zip(&post).map(|(&s, w)| w * inst.f.value(s)).sum();
        worst = worst.max((weighted - unordered_set_estimate(&inst.dist, &set, &inst.f)?).abs());
    }
    Ok(worst)
}

fn rao_blackwell_sum_and_sample(inst: &Instance, _: &IntegralConfig) -> Result<f64> {
    let est = Estimator::new(&inst.dist, &inst.f)?;
    let mut worst: f64 = 0.0;
    for (set, orderings) in orderings_by_set(inst)? {
        let us = unordered_set_estimate(&inst.dist, &set, &inst.f)?;
        let total: f64 = orderings.iter().map(|(_, p)| p).sum();
        for kind in split_kinds(inst.k) {
            let mut mean = 0.0;
            for (b, p) in &orderings {
                mean += p * est.value(kind, &Draw::Ordered(b.clone()))?;
            }
            worst = worst.max((mean / total - us).abs());
        }
    }
    Ok(worst)
}

fn rao_blackwell_importance_weighted(inst: &Instance, _: &IntegralConfig) -> Result<f64> {
    let est = Estimator::new(&inst.dist, &inst.f)?;
    let mut worst: f64 = 0.0;
    for (set, _) in enumerate_unordered(&inst.dist, inst.k)?.entries {
        let sample = OrderedSample::new(set.indices().to_vec(), inst.dist.len())?;
        let cond = integrate_over_threshold(&inst.dist, &set, |threshold| {
            let draw = Draw::Thresholded { sample: sample.clone(), threshold };
            est.evaluate(EstimatorKind::ImportanceWeighted, &draw, Target::Value)
        })?;
        worst = worst.max((cond.mean[0] - unordered_set_estimate(&inst.dist, &set, &inst.f)?).abs());
    }
    Ok(worst)
}

fn variance_dominance(inst: &Instance, _: &IntegralConfig) -> Result<f64> {
    let est = Estimator::new(&inst.dist, &inst.f)?;
    let us = estimator_moments(&est, EstimatorKind::UnorderedSet, Target::Value, inst.k)?.variance;
    let mut others = vec![estimator_moments(&est, EstimatorKind::SingleSample, Target::Value, 1)?.variance];
    for kind in split_kinds(inst.k) {
        others.push(estimator_moments(&est, kind, Target::Value, inst.k)?.variance);
    }
    if inst.k >= 2 || inst.dist.len() == 1 {
        others.push(estimator_moments(&est, EstimatorKind::ImportanceWeighted, Target::Value, inst.k)?.variance);
    }
    Ok(others.iter().map(|v| us - v).fold(0.0, f64::max))
}

fn control_variate_zero_mean(inst: &Instance, _: &IntegralConfig) -> Result<f64> {
    if inst.k < 2 {
        return Ok(0.0);
    }
    let score = inst.dist.softmax_score()?;
    let est = Estimator::new(&inst.dist, &inst.f)?.with_score(&score)?;
    let mut mean = vec![0.0; inst.dist.len()];
    for (set, p) in enumerate_unordered(&inst.dist, inst.k)?.entries {
        let draw = Draw::Set(set);
        let plain = est.gradient(EstimatorKind::UnorderedSetPG, &draw)?;
        let with_baseline = est.gradient(EstimatorKind::UnorderedSetPGBaseline, &draw)?;
        for ((m, a), b) in mean.iter_mut().zip(plain).zip(with_baseline) {
            *m += p * (a - b);
        }
    }
    Ok(mean.iter().map(|m| m.abs()).fold(0.0, f64::max))
}

fn risk_forms_agree(inst: &Instance, _: &IntegralConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (set, _) in enumerate_unordered(&inst.dist, inst.k)?.entries {
        let direct = crate::estimators::risk_grad(&inst.dist, &set, &inst.f, RiskForm::Direct)?;
        let baseline = crate::estimators::risk_grad(&inst.dist, &set, &inst.f, RiskForm::Baseline)?;
        worst = worst.max(max_abs_diff(&direct, &baseline));
    }
    Ok(worst)
}

fn set_probability_backends(inst: &Instance, integral: &IntegralConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (set, p) in enumerate_unordered(&inst.dist, inst.k)?.entries {
        let s = set.indices();
        let truth = p.ln();
        for lp in [
            log_p_set_naive(&inst.dist, s)?,
            log_p_set_exact(&inst.dist, s, &[])?,
            log_p_set_integral(&inst.dist, s, &[], integral)?,
        ] {
            // relative to |log p(S)|, floored at one so full-domain sets are covered
            worst = worst.max((lp - truth).abs() / truth.abs().max(1.0));
        }
    }
    Ok(worst)
}
