//! Brute-force ground truth: exact expectations and gradients, enumerated
//! sample spaces, and exact estimator moments.
//!
//! Estimators that depend on the Gumbel threshold `kappa` are integrated
//! over its conditional law given the sampled set,
//! `p(kappa | S) = f_{phi_R}(kappa) Π_{s∈S} q_s(kappa) / p(S)` with
//! `R = D \ S`. In the variable `x = phi_R - kappa` the density of `kappa`
//! becomes `e^x exp(-e^x) dx`; the integral is computed by the trapezoid
//! rule, doubling the number of nodes until successive results agree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{CategoricalDist, Objective, ScoreFn, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::estimators::{top_by_prob, Draw, Estimator, EstimatorKind, Target};
use crate::math::{log_gumbel_survival, logsumexp};
use crate::sampling::{OrderedSample, Threshold, UnorderedSample};

/// Cap on the number of ordered samples or sample tuples enumerated.
pub const SPACE_CAP: usize = 1_000_000;

/// Relative change between successive quadrature refinements at which the
/// threshold integral is accepted.
const QUADRATURE_RTOL: f64 = 1e-8;
const QUADRATURE_MAX_NODES: usize = 1 << 20;

/// All outcomes of a sampling procedure with their exact probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumeratedSampleSpace<S> {
    pub entries: Vec<(S, f64)>,
    pub total: f64,
}

impl<S> EnumeratedSampleSpace<S> {
    fn new(entries: Vec<(S, f64)>) -> Self {
        let total = entries.iter().map(|(_, p)| p).sum();
        Self { entries, total }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_domain(dist: &CategoricalDist) -> Result<()> {
    if dist.len() > DEFAULT_ENUMERATION_CAP {
        return Err(Error::DomainTooLarge { size: dist.len() as u128, cap: DEFAULT_ENUMERATION_CAP });
    }
    Ok(())
}

/// `Σ_x p(x) f(x)`.
pub fn exact_expectation(dist: &CategoricalDist, f: &Objective) -> Result<f64> {
    check_domain(dist)?;
    check_objective(dist, f)?;
    Ok((0..dist.len()).map(|x| dist.prob(x) * f.value(x)).sum())
}

/// `Σ_x grad p(x) f(x) + Σ_x p(x) grad f(x)`, the second sum only when `f`
/// has a pathwise gradient.
pub fn exact_gradient(dist: &CategoricalDist, f: &Objective, score: &dyn ScoreFn) -> Result<Vec<f64>> {
    check_domain(dist)?;
    check_objective(dist, f)?;
    let mut out = vec![0.0; score.num_params()];
    for x in 0..dist.len() {
        score.add_score(x, dist.prob(x) * f.value(x), &mut out);
    }
    if f.has_param_grad() {
        for x in 0..dist.len() {
            let df = f.param_grad(x).expect("objective has a pathwise gradient");
            out.iter_mut().zip(df).for_each(|(o, d)| *o += dist.prob(x) * d);
        }
    }
    Ok(out)
}

/// [`exact_gradient`] with respect to the logits.
pub fn exact_logit_gradient(dist: &CategoricalDist, f: &Objective) -> Result<Vec<f64>> {
    exact_gradient(dist, f, &dist.softmax_score()?)
}

fn check_objective(dist: &CategoricalDist, f: &Objective) -> Result<()> {
    if f.len() != dist.len() {
        return Err(Error::InvalidConfig(format!(
            "objective has {} values for a domain of size {}",
            f.len(),
            dist.len()
        )));
    }
    Ok(())
}

fn falling_factorial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128))
}

/// Every ordered sample of size `k` without replacement with its
/// probability `Π_i p(b_i) / (1 - Σ_{j<i} p(b_j))`.
pub fn enumerate_ordered(dist: &CategoricalDist, k: usize) -> Result<EnumeratedSampleSpace<OrderedSample>> {
    let n = dist.len();
    if k < 1 || k > n {
        return Err(Error::InvalidSampleSize { k, n });
    }
    let size = falling_factorial(n, k);
    if size > SPACE_CAP as u128 {
        return Err(Error::SpaceTooLarge { size, cap: SPACE_CAP });
    }
    let p = dist.probs();
    let mut entries = Vec::with_capacity(size as usize);
    let mut prefix = Vec::with_capacity(k);
    let mut used = vec![false; n];
    extend_ordered(&p, k, 1.0, 0.0, &mut prefix, &mut used, &mut entries);
    Ok(EnumeratedSampleSpace::new(entries))
}

fn extend_ordered(
    p: &[f64],
    k: usize,
    prob: f64,
    mass: f64,
    prefix: &mut Vec<usize>,
    used: &mut [bool],
    out: &mut Vec<(OrderedSample, f64)>,
) {
    if prefix.len() == k {
        out.push((OrderedSample::new(prefix.clone(), p.len()).expect("distinct prefix"), prob));
        return;
    }
    // remaining mass summed directly so it stays exact near the end
    let remaining: f64 =
        if mass == 0.0 { 1.0 } else { p.iter().zip(used.iter()).filter(|(_, &u)| !u).map(|(q, _)| q).sum() };
    for x in 0..p.len() {
        if used[x] {
            continue;
        }
        used[x] = true;
        prefix.push(x);
        extend_ordered(p, k, prob * p[x] / remaining, mass + p[x], prefix, used, out);
        prefix.pop();
        used[x] = false;
    }
}

/// Every unordered sample of size `k` with the summed probability of its
/// orderings, sorted lexicographically.
pub fn enumerate_unordered(dist: &CategoricalDist, k: usize) -> Result<EnumeratedSampleSpace<UnorderedSample>> {
    let ordered = enumerate_ordered(dist, k)?;
    let mut sets: Vec<(UnorderedSample, f64)> =
        ordered.entries.into_iter().map(|(b, p)| (b.to_unordered(), p)).collect();
    sets.sort_by(|a, b| a.0.cmp(&b.0));
    let mut entries: Vec<(UnorderedSample, f64)> = Vec::new();
    for (s, p) in sets {
        match entries.last_mut() {
            Some((last, acc)) if *last == s => *acc += p,
            _ => entries.push((s, p)),
        }
    }
    Ok(EnumeratedSampleSpace::new(entries))
}

/// Every tuple in `D^k` with its product probability.
pub fn enumerate_with_replacement(dist: &CategoricalDist, k: usize) -> Result<EnumeratedSampleSpace<Vec<usize>>> {
    let n = dist.len();
    let size = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if size > SPACE_CAP as u128 {
        return Err(Error::SpaceTooLarge { size, cap: SPACE_CAP });
    }
    let p = dist.probs();
    let entries = (0..size as usize)
        .map(|mut code| {
            let mut tuple = vec![0; k];
            for slot in tuple.iter_mut().rev() {
                *slot = code % n;
                code /= n;
            }
            let prob = tuple.iter().map(|&x| p[x]).product();
            (tuple, prob)
        })
        .collect();
    Ok(EnumeratedSampleSpace::new(entries))
}

/// `P(b_1 = s | S) = p(s) R(S, s)` for the elements of `S` in increasing
/// order.
pub fn posterior_b1(dist: &CategoricalDist, set: &UnorderedSample) -> Result<Vec<f64>> {
    let lr = crate::setprob::loo_ratios(dist, set.indices(), 1, &Default::default())?;
    Ok(lr.elements.iter().zip(&lr.ratios).map(|(&s, r)| dist.prob(s) * r).collect())
}

/// Mean vector and covariance trace of an estimator under its sampling law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    /// Variance for scalar targets, trace of the covariance for vectors.
    pub variance: f64,
}

/// Conditional moments of a threshold-dependent estimate given its set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    pub mean: Vec<f64>,
    /// `E[||e - mean||^2 | S]`.
    pub spread: f64,
    /// `∫ p(S, kappa) dkappa`, which equals `p(S)`.
    pub set_prob: f64,
    pub nodes: usize,
}

/// Integrates `estimate(kappa)` against `p(kappa | S)`. When `S` is the
/// whole domain the threshold is absent and the estimate is evaluated once.
pub fn integrate_over_threshold(
    dist: &CategoricalDist,
    set: &UnorderedSample,
    mut estimate: impl FnMut(Threshold) -> Result<Vec<f64>>,
) -> Result<ConditionalMoments> {
    let members = set.indices();
    for &s in members {
        dist.check_index(s)?;
    }
    let log_rest = dist.log_complement_mass(members)?;
    if members.len() == dist.len() {
        let mean = estimate(Threshold::WholeDomain)?;
        return Ok(ConditionalMoments { mean, spread: 0.0, set_prob: 1.0, nodes: 1 });
    }
    let d: Vec<f64> = members.iter().map(|&s| dist.log_prob(s) - log_rest).collect();
    let d_max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = (-d_max).min(0.0) - 50.0;
    let hi = (100.0 + 4.0 * members.len() as f64).ln();
    let log_weight = |x: f64| x - x.exp() + d.iter().map(|di| log_gumbel_survival(x + di)).sum::<f64>();

    // (log weight, estimate) at every node; estimates skipped where the
    // weight underflows
    let mut eval = |x: f64| -> Result<(f64, Option<Vec<f64>>)> {
        let lw = log_weight(x);
        if lw < -700.0 {
            return Ok((f64::NEG_INFINITY, None));
        }
        Ok((lw, Some(estimate(Threshold::Kappa(log_rest - x))?)))
    };

    let mut nodes = 1025;
    let mut values: Vec<(f64, Option<Vec<f64>>)> = Vec::with_capacity(nodes);
    for j in 0..nodes {
        values.push(eval(lo + (hi - lo) * j as f64 / (nodes - 1) as f64)?);
    }
    let mut current = trapezoid_moments(&values, lo, hi);
    loop {
        let refined_nodes = 2 * nodes - 1;
        let mut refined = Vec::with_capacity(refined_nodes);
        for (j, v) in values.into_iter().enumerate() {
            if j > 0 {
                let x = lo + (hi - lo) * (2 * j - 1) as f64 / (refined_nodes - 1) as f64;
                refined.push(eval(x)?);
            }
            refined.push(v);
        }
        values = refined;
        nodes = refined_nodes;
        let next = trapezoid_moments(&values, lo, hi);
        let converged = next.converged_from(&current);
        current = next;
        if converged || nodes >= QUADRATURE_MAX_NODES {
            break;
        }
    }
    current.nodes = nodes;
    Ok(current)
}

impl ConditionalMoments {
    fn converged_from(&self, prev: &ConditionalMoments) -> bool {
        let scale = self.mean.iter().map(|m| m.abs()).fold(self.spread.sqrt(), f64::max).max(1e-300);
        let mean_ok = self.mean.iter().zip(&prev.mean).all(|(a, b)| (a - b).abs() <= QUADRATURE_RTOL * scale);
        let spread_ok = (self.spread - prev.spread).abs() <= QUADRATURE_RTOL * scale * scale;
        let prob_ok = (self.set_prob - prev.set_prob).abs() <= QUADRATURE_RTOL * self.set_prob;
        mean_ok && spread_ok && prob_ok
    }
}

fn trapezoid_moments(values: &[(f64, Option<Vec<f64>>)], lo: f64, hi: f64) -> ConditionalMoments {
    let n = values.len();
    let h = (hi - lo) / (n - 1) as f64;
    let logs: Vec<f64> =
        values.iter().enumerate().map(|(j, (lw, _))| if j == 0 || j == n - 1 { lw - 2f64.ln() } else { *lw }).collect();
    let log_total = logsumexp(&logs);
    let weights: Vec<f64> = logs.iter().map(|l| (l - log_total).exp()).collect();
    let dim = values.iter().find_map(|(_, e)| e.as_ref().map(|e| e.len())).unwrap_or(0);
    let mut mean = vec![0.0; dim];
    for (w, (_, e)) in weights.iter().zip(values) {
        if let Some(e) = e {
            mean.iter_mut().zip(e).for_each(|(m, v)| *m += w * v);
        }
    }
    let spread = weights.iter().zip(values).filter_map(|(w, (_, e))| e.as_ref().map(|e| w * sq_dist(e, &mean))).sum();
    ConditionalMoments { mean, spread, set_prob: (log_total + h.ln()).exp(), nodes: n }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Every draw of `kind` at sample size `k` with its probability. Threshold
/// estimators are listed by their set; the threshold is integrated out
/// separately.
pub fn enumerate_draws(dist: &CategoricalDist, kind: EstimatorKind, k: usize) -> Result<Vec<(Draw, f64)>> {
    kind.check_k(k, dist.len())?;
    Ok(match kind {
        EstimatorKind::SingleSample => (0..dist.len()).map(|x| (Draw::Single(x), dist.prob(x))).collect(),
        EstimatorKind::StochSumAndSample(_) => {
            enumerate_ordered(dist, k)?.entries.into_iter().map(|(b, p)| (Draw::Ordered(b), p)).collect()
        }
        EstimatorKind::DetSumAndSample => {
            let summed = top_by_prob(dist, k - 1);
            let log_rest = dist.log_complement_mass(&summed)?;
            (0..dist.len())
                .filter(|x| !summed.contains(x))
                .map(|x| {
                    let p = (dist.log_prob(x) - log_rest).exp();
                    (Draw::Remainder { summed: summed.clone(), sampled: x }, p)
                })
                .collect()
        }
        EstimatorKind::ReinforceWR | EstimatorKind::ReinforceWRBaseline => enumerate_with_replacement(dist, k)?
            .entries
            .into_iter()
            .map(|(x, p)| (Draw::WithReplacement(x), p))
            .collect(),
        EstimatorKind::ReinforceSampledBaseline => enumerate_with_replacement(dist, 2 * k)?
            .entries
            .into_iter()
            .map(|(mut x, p)| {
                let baseline = x.split_off(k);
                (Draw::Paired { samples: x, baseline }, p)
            })
            .collect(),
        _ => enumerate_unordered(dist, k)?.entries.into_iter().map(|(s, p)| (Draw::Set(s), p)).collect(),
    })
}

/// Exact mean and variance of `kind` at sample size `k` for `target`.
pub fn estimator_moments(est: &Estimator, kind: EstimatorKind, target: Target, k: usize) -> Result<Moments> {
    let dist = est.dist();
    if kind.uses_threshold() {
        if k == 1 && dist.len() > 1 {
            return Err(Error::InvalidConfig(
                "threshold estimators with k = 1 have no finite second moment in general".into(),
            ));
        }
        let sets = enumerate_unordered(dist, k)?;
        let conditional: Vec<ConditionalMoments> = sets
            .entries
            .par_iter()
            .map(|(s, _)| {
                integrate_over_threshold(dist, s, |threshold| {
                    let sample = OrderedSample::new(s.indices().to_vec(), dist.len())?;
                    est.evaluate(kind, &Draw::Thresholded { sample, threshold }, target)
                })
            })
            .collect::<Result<_>>()?;
        let parts: Vec<(f64, Vec<f64>, f64)> =
            sets.entries.iter().zip(conditional).map(|((_, p), c)| (*p, c.mean, c.spread)).collect();
        return Ok(combine(&parts));
    }
    let draws = enumerate_draws(dist, kind, k)?;
    let values: Vec<Vec<f64>> = draws.par_iter().map(|(d, _)| est.evaluate(kind, d, target)).collect::<Result<_>>()?;
    let parts: Vec<(f64, Vec<f64>, f64)> = draws.iter().zip(values).map(|((_, p), v)| (*p, v, 0.0)).collect();
    Ok(combine(&parts))
}

/// Mixture of `(probability, conditional mean, conditional spread)` parts,
/// normalized by the total probability.
fn combine(parts: &[(f64, Vec<f64>, f64)]) -> Moments {
    let total: f64 = parts.iter().map(|(p, _, _)| p).sum();
    let dim = parts.first().map_or(0, |(_, m, _)| m.len());
    let mut mean = vec![0.0; dim];
    for (p, m, _) in parts {
        mean.iter_mut().zip(m).for_each(|(acc, v)| *acc += p * v);
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let variance = parts.iter().map(|(p, m, s)| p * (s + sq_dist(m, &mean))).sum::<f64>() / total;
    Moments { mean, variance }
}
