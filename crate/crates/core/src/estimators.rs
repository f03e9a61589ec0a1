//! Expectation and policy-gradient estimators.
//!
//! Every estimator is a pair of a sampling procedure, producing a [`Draw`],
//! and a deterministic function of that draw. Keeping the two apart lets the
//! oracle evaluate an estimator on every point of its sample space.
//!
//! Gradients are taken with respect to the parameters of a [`ScoreFn`] and
//! use `grad p(x) = p(x) * score(x)`. Estimators that are linear in `f`
//! (single sample, unordered set, sum-and-sample, importance weighted,
//! REINFORCE without baseline) are described by a list of `(x, w)` weights;
//! their value is `Σ w f(x)` and their gradient `Σ w f(x) score(x)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::distributions::{CategoricalDist, Objective, ScoreFn};
use crate::error::{Error, Result};
use crate::sampling::{self, OrderedSample, Threshold, UnorderedSample};
use crate::setprob::{loo_ratios, loo_ratios_restricted, SetProbConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    SingleSample,
    UnorderedSet,
    UnorderedSetPG,
    UnorderedSetPGBaseline,
    FullUnorderedSetPG,
    /// Sums the first `k - m` elements of an ordered sample and estimates
    /// the rest from the last `m`.
    StochSumAndSample(usize),
    DetSumAndSample,
    ImportanceWeighted,
    IwpgBaseline,
    IwpgNormalized,
    ReinforceWR,
    ReinforceWRBaseline,
    ReinforceSampledBaseline,
    Risk,
    RiskBaselineForm,
}

impl EstimatorKind {
    /// Every kind, with the sum-and-sample split at `m = 1`.
    pub const ALL: [EstimatorKind; 15] = [
        EstimatorKind::SingleSample,
        EstimatorKind::UnorderedSet,
        EstimatorKind::UnorderedSetPG,
        EstimatorKind::UnorderedSetPGBaseline,
        EstimatorKind::FullUnorderedSetPG,
        EstimatorKind::StochSumAndSample(1),
        EstimatorKind::DetSumAndSample,
        EstimatorKind::ImportanceWeighted,
        EstimatorKind::IwpgBaseline,
        EstimatorKind::IwpgNormalized,
        EstimatorKind::ReinforceWR,
        EstimatorKind::ReinforceWRBaseline,
        EstimatorKind::ReinforceSampledBaseline,
        EstimatorKind::Risk,
        EstimatorKind::RiskBaselineForm,
    ];

    /// Whether the estimate is unbiased for its target.
    pub fn is_unbiased(self) -> bool {
        !matches!(self, EstimatorKind::IwpgNormalized | EstimatorKind::Risk | EstimatorKind::RiskBaselineForm)
    }

    /// Whether the estimate depends on the Gumbel threshold.
    pub fn uses_threshold(self) -> bool {
        matches!(self, EstimatorKind::ImportanceWeighted | EstimatorKind::IwpgBaseline | EstimatorKind::IwpgNormalized)
    }

    /// Whether samples are drawn without replacement.
    pub fn without_replacement(self) -> bool {
        !matches!(
            self,
            EstimatorKind::SingleSample
                | EstimatorKind::ReinforceWR
                | EstimatorKind::ReinforceWRBaseline
                | EstimatorKind::ReinforceSampledBaseline
        )
    }

    /// Nominal number of objective evaluations for sample size `k`.
    pub fn evals(self, k: usize) -> usize {
        match self {
            EstimatorKind::SingleSample => 1,
            EstimatorKind::ReinforceSampledBaseline => 2 * k,
            _ => k,
        }
    }

    /// Checks that `k` is a valid sample size on a domain of size `n`.
    pub fn check_k(self, k: usize, n: usize) -> Result<()> {
        if k < 1 {
            return Err(Error::InvalidSampleSize { k, n });
        }
        match self {
            EstimatorKind::SingleSample if k != 1 => return Err(Error::InvalidSampleSize { k, n }),
            EstimatorKind::UnorderedSetPGBaseline | EstimatorKind::ReinforceWRBaseline if k < 2 => {
                return Err(Error::NeedTwoSamples)
            }
            EstimatorKind::StochSumAndSample(m) if m < 1 || m >= k => return Err(Error::InvalidSplit { m, k }),
            EstimatorKind::DetSumAndSample if k < 2 => return Err(Error::InvalidSampleSize { k, n }),
            _ => {}
        }
        if self.without_replacement() && k > n {
            return Err(Error::InvalidSampleSize { k, n });
        }
        Ok(())
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = match self {
            EstimatorKind::SingleSample => "single-sample",
            EstimatorKind::UnorderedSet => "unordered-set",
            EstimatorKind::UnorderedSetPG => "unordered-set-pg",
            EstimatorKind::UnorderedSetPGBaseline => "unordered-set-pg-bl",
            EstimatorKind::FullUnorderedSetPG => "full-unordered-set-pg",
            EstimatorKind::StochSumAndSample(1) => "stoch-sum-and-sample",
            EstimatorKind::StochSumAndSample(m) => return write!(f, "stoch-sum-and-sample-m{m}"),
            EstimatorKind::DetSumAndSample => "det-sum-and-sample",
            EstimatorKind::ImportanceWeighted => "importance-weighted",
            EstimatorKind::IwpgBaseline => "iw-pg-bl",
            EstimatorKind::IwpgNormalized => "iw-pg-normalized",
            EstimatorKind::ReinforceWR => "reinforce-wr",
            EstimatorKind::ReinforceWRBaseline => "reinforce-wr-bl",
            EstimatorKind::ReinforceSampledBaseline => "reinforce-sampled-bl",
            EstimatorKind::Risk => "risk",
            EstimatorKind::RiskBaselineForm => "risk-bl",
        };
        f.write_str(id)
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(m) = s.strip_prefix("stoch-sum-and-sample-m") {
            return m
                .parse()
                .ok()
                .filter(|&m| m >= 1)
                .map(EstimatorKind::StochSumAndSample)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator '{s}'")));
        }
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator '{s}'")))
    }
}

impl Serialize for EstimatorKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Form of the importance-weighted policy gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IwpgForm {
    /// `Σ grad p(s) / q(s) f(s)`.
    Plain,
    /// Sample-wide baseline with correction weights; unbiased.
    Baseline,
    /// Normalized importance weights; biased.
    Normalized,
}

/// Form of the RISK gradient; both give the same value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskForm {
    /// Gradient of the self-normalized sum.
    Direct,
    /// Rewritten with the built-in baseline.
    Baseline,
}

/// What an estimator is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `E[f(x)]`.
    Value,
    /// `grad_theta E[f(x)]`.
    Gradient,
}

/// Randomness consumed by one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Draw {
    Single(usize),
    Set(UnorderedSample),
    Ordered(OrderedSample),
    /// Gumbel-top-k sample with its threshold.
    Thresholded {
        sample: OrderedSample,
        threshold: Threshold,
    },
    /// Deterministically summed elements and one draw from the rest.
    Remainder {
        summed: Vec<usize>,
        sampled: usize,
    },
    WithReplacement(Vec<usize>),
    Paired {
        samples: Vec<usize>,
        baseline: Vec<usize>,
    },
}

impl Draw {
    /// Number of sampled elements (the sample size `k` of the estimator).
    pub fn size(&self) -> usize {
        match self {
            Draw::Single(_) => 1,
            Draw::Set(s) => s.len(),
            Draw::Ordered(s) => s.len(),
            Draw::Thresholded { sample, .. } => sample.len(),
            Draw::Remainder { summed, .. } => summed.len() + 1,
            Draw::WithReplacement(x) => x.len(),
            Draw::Paired { samples, .. } => samples.len(),
        }
    }
}

/// A gradient estimate with its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradEstimate {
    pub grad: Vec<f64>,
    pub estimator: EstimatorKind,
    pub k: usize,
    pub evals: usize,
    pub seed: Option<u64>,
}

/// The `m` most probable elements, ties to the lower index.
pub fn top_by_prob(dist: &CategoricalDist, m: usize) -> Vec<usize> {
    let lp = dist.log_probs();
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
    order.truncate(m);
    order
}

/// Estimators for one distribution, objective and score function.
pub struct Estimator<'a> {
    dist: &'a CategoricalDist,
    objective: &'a Objective,
    score: Option<&'a dyn ScoreFn>,
    cfg: SetProbConfig,
}

impl<'a> Estimator<'a> {
    /// Value estimators only; gradients need [`Estimator::with_score`].
    pub fn new(dist: &'a CategoricalDist, objective: &'a Objective) -> Result<Self> {
        if objective.len() != dist.len() {
            return Err(Error::InvalidConfig(format!(
                "objective has {} values for a domain of size {}",
                objective.len(),
                dist.len()
            )));
        }
        Ok(Self { dist, objective, score: None, cfg: SetProbConfig::default() })
    }

    pub fn with_score(mut self, score: &'a dyn ScoreFn) -> Result<Self> {
        let n = score.num_params();
        if (0..self.objective.len()).any(|x| self.objective.param_grad(x).is_some_and(|g| g.len() != n)) {
            return Err(Error::InvalidConfig("pathwise gradient length differs from the parameter count".into()));
        }
        self.score = Some(score);
        Ok(self)
    }

    pub fn with_config(mut self, cfg: SetProbConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn dist(&self) -> &CategoricalDist {
        self.dist
    }

    pub fn objective(&self) -> &Objective {
        self.objective
    }

    fn score_fn(&self) -> Result<&'a dyn ScoreFn> {
        self.score.ok_or(Error::NoParameterization)
    }

    /// Draws the randomness `kind` needs for sample size `k`.
    pub fn sample<R: Rng + ?Sized>(&self, kind: EstimatorKind, k: usize, rng: &mut R) -> Result<Draw> {
        let dist = self.dist;
        kind.check_k(k, dist.len())?;
        Ok(match kind {
            EstimatorKind::SingleSample => Draw::Single(sampling::categorical(rng, dist)),
            EstimatorKind::UnorderedSet
            | EstimatorKind::UnorderedSetPG
            | EstimatorKind::UnorderedSetPGBaseline
            | EstimatorKind::FullUnorderedSetPG
            | EstimatorKind::Risk
            | EstimatorKind::RiskBaselineForm => Draw::Set(sampling::gumbel_top_k(rng, dist, k)?.0.to_unordered()),
            EstimatorKind::StochSumAndSample(_) => Draw::Ordered(sampling::gumbel_top_k(rng, dist, k)?.0),
            EstimatorKind::DetSumAndSample => {
                let summed = top_by_prob(dist, k - 1);
                let (rest, keep) = dist.restrict(&summed)?;
                let sampled = keep[sampling::categorical(rng, &rest)];
                Draw::Remainder { summed, sampled }
            }
            EstimatorKind::ImportanceWeighted | EstimatorKind::IwpgBaseline | EstimatorKind::IwpgNormalized => {
                let (sample, threshold) = sampling::gumbel_top_k(rng, dist, k)?;
                Draw::Thresholded { sample, threshold }
            }
            EstimatorKind::ReinforceWR | EstimatorKind::ReinforceWRBaseline => {
                Draw::WithReplacement(sampling::with_replacement(rng, dist, k))
            }
            EstimatorKind::ReinforceSampledBaseline => {
                let samples = sampling::with_replacement(rng, dist, k);
                let baseline = sampling::with_replacement(rng, dist, k);
                Draw::Paired { samples, baseline }
            }
        })
    }

    /// Samples and evaluates the gradient estimate.
    pub fn estimate<R: Rng + ?Sized>(&self, kind: EstimatorKind, k: usize, rng: &mut R) -> Result<GradEstimate> {
        let draw = self.sample(kind, k, rng)?;
        let grad = self.gradient(kind, &draw)?;
        Ok(GradEstimate { grad, estimator: kind, k, evals: kind.evals(k), seed: None })
    }

    /// Evaluates `kind` on `draw` for `target`; values are returned as a
    /// vector of length one.
    pub fn evaluate(&self, kind: EstimatorKind, draw: &Draw, target: Target) -> Result<Vec<f64>> {
        match target {
            Target::Value => self.value(kind, draw).map(|v| vec![v]),
            Target::Gradient => self.gradient(kind, draw),
        }
    }

    /// Estimate of `E[f]`. Gradient-only kinds use the value estimator they
    /// are built on; RISK gives the self-normalized sum.
    pub fn value(&self, kind: EstimatorKind, draw: &Draw) -> Result<f64> {
        let f = |x: usize| self.objective.value(x);
        match kind {
            EstimatorKind::Risk | EstimatorKind::RiskBaselineForm => {
                let set = self.expect_set(kind, draw)?;
                let (p_total, pf) = set.indices().iter().fold((0.0, 0.0), |(pt, pf), &s| {
                    let p = self.dist.prob(s);
                    (pt + p, pf + p * f(s))
                });
                Ok(pf / p_total)
            }
            _ => Ok(self.linear_weights(kind.linear_base(), draw)?.iter().map(|&(x, w)| w * f(x)).sum()),
        }
    }

    /// Estimate of `grad_theta E[f]`.
    pub fn gradient(&self, kind: EstimatorKind, draw: &Draw) -> Result<Vec<f64>> {
        let f = |x: usize| self.objective.value(x);
        let p = |x: usize| self.dist.prob(x);
        let score = self.score_fn()?;
        let mut out = vec![0.0; score.num_params()];
        match kind {
            EstimatorKind::UnorderedSetPGBaseline => {
                let set = self.expect_set(kind, draw)?;
                if set.len() < 2 {
                    return Err(Error::NeedTwoSamples);
                }
                let lr = loo_ratios(self.dist, set.indices(), 2, &self.cfg)?;
                let r2 = lr.second_order.as_ref().expect("second order requested");
                let s = &lr.elements;
                for (i, &si) in s.iter().enumerate() {
                    let baseline: f64 = s.iter().enumerate().map(|(j, &sj)| p(sj) * r2[i][j] * f(sj)).sum();
                    score.add_score(si, p(si) * lr.ratios[i] * (f(si) - baseline), &mut out);
                }
            }
            EstimatorKind::FullUnorderedSetPG => {
                let set = self.expect_set(kind, draw)?;
                if !self.objective.has_param_grad() {
                    return Err(Error::NoPathwiseGradient);
                }
                let lr = loo_ratios(self.dist, set.indices(), 1, &self.cfg)?;
                for (&s, &r) in lr.elements.iter().zip(&lr.ratios) {
                    let w = p(s) * r;
                    score.add_score(s, w * f(s), &mut out);
                    let df = self.objective.param_grad(s).expect("checked above");
                    out.iter_mut().zip(df).for_each(|(o, d)| *o += w * d);
                }
            }
            EstimatorKind::IwpgBaseline | EstimatorKind::IwpgNormalized => {
                let form = if kind == EstimatorKind::IwpgBaseline { IwpgForm::Baseline } else { IwpgForm::Normalized };
                let iw = self.linear_weights(EstimatorKind::ImportanceWeighted, draw)?;
                let total: f64 = iw.iter().map(|&(_, w)| w).sum();
                let baseline: f64 = iw.iter().map(|&(s, w)| w * f(s)).sum();
                for &(s, w) in &iw {
                    let coef = match form {
                        IwpgForm::Baseline => w * (f(s) * (1.0 - p(s) + w) - baseline),
                        _ => w / (total - w + p(s)) * (f(s) - baseline / total),
                    };
                    score.add_score(s, coef, &mut out);
                }
            }
            EstimatorKind::ReinforceWRBaseline => {
                let Draw::WithReplacement(x) = draw else { return Err(self.mismatch(kind)) };
                let k = x.len();
                if k < 2 {
                    return Err(Error::NeedTwoSamples);
                }
                let total: f64 = x.iter().map(|&xi| f(xi)).sum();
                for &xi in x {
                    let others = (total - f(xi)) / (k - 1) as f64;
                    score.add_score(xi, (f(xi) - others) / k as f64, &mut out);
                }
            }
            EstimatorKind::ReinforceSampledBaseline => {
                let Draw::Paired { samples, baseline } = draw else { return Err(self.mismatch(kind)) };
                if samples.len() != baseline.len() {
                    return Err(Error::BaselineSizeMismatch { samples: samples.len(), baseline: baseline.len() });
                }
                self.check_indices(samples.iter().chain(baseline))?;
                let k = samples.len() as f64;
                for (&x, &b) in samples.iter().zip(baseline) {
                    score.add_score(x, (f(x) - f(b)) / k, &mut out);
                }
            }
            EstimatorKind::Risk | EstimatorKind::RiskBaselineForm => {
                let set = self.expect_set(kind, draw)?;
                let form = if kind == EstimatorKind::Risk { RiskForm::Direct } else { RiskForm::Baseline };
                self.risk(score, set, form, &mut out);
            }
            _ => {
                for (x, w) in self.linear_weights(kind.linear_base(), draw)? {
                    score.add_score(x, w * f(x), &mut out);
                }
            }
        }
        Ok(out)
    }

    fn risk(&self, score: &dyn ScoreFn, set: &UnorderedSample, form: RiskForm, out: &mut [f64]) {
        let f = |x: usize| self.objective.value(x);
        let p = |x: usize| self.dist.prob(x);
        let s = set.indices();
        let total: f64 = s.iter().map(|&x| p(x)).sum();
        let pf: f64 = s.iter().map(|&x| p(x) * f(x)).sum();
        match form {
            RiskForm::Direct => {
                // grad(p_s / P) = grad p_s / P - p_s grad P / P^2
                for &x in s {
                    score.add_score(x, p(x) * f(x) / total, out);
                    score.add_score(x, -p(x) * pf / (total * total), out);
                }
            }
            RiskForm::Baseline => {
                for &x in s {
                    score.add_score(x, p(x) / total * (f(x) - pf / total), out);
                }
            }
        }
    }

    /// `(x, w)` pairs of a linear estimator.
    pub fn linear_weights(&self, kind: EstimatorKind, draw: &Draw) -> Result<Vec<(usize, f64)>> {
        let p = |x: usize| self.dist.prob(x);
        match (kind, draw) {
            (EstimatorKind::SingleSample, Draw::Single(x)) => {
                self.dist.check_index(*x)?;
                Ok(vec![(*x, 1.0)])
            }
            (EstimatorKind::UnorderedSet, Draw::Set(set)) => {
                let lr = loo_ratios(self.dist, set.indices(), 1, &self.cfg)?;
                Ok(lr.elements.iter().zip(&lr.ratios).map(|(&s, &r)| (s, p(s) * r)).collect())
            }
            (EstimatorKind::StochSumAndSample(m), Draw::Ordered(b)) => self.sum_and_sample_weights(b, m),
            (EstimatorKind::DetSumAndSample, Draw::Remainder { summed, sampled }) => {
                let k = summed.len() + 1;
                kind.check_k(k, self.dist.len())?;
                if *summed != top_by_prob(self.dist, k - 1) {
                    return Err(Error::InvalidSample("summed elements are not the most probable".into()));
                }
                self.dist.check_index(*sampled)?;
                if summed.contains(sampled) {
                    return Err(Error::InvalidSample("sampled element is among the summed ones".into()));
                }
                let rest = self.dist.log_complement_mass(summed)?.exp();
                let mut w: Vec<(usize, f64)> = summed.iter().map(|&c| (c, p(c))).collect();
                w.push((*sampled, rest));
                Ok(w)
            }
            (EstimatorKind::ImportanceWeighted, Draw::Thresholded { sample, threshold }) => {
                self.check_threshold(sample, threshold)?;
                let mut idx = sample.indices().to_vec();
                idx.sort_unstable();
                Ok(idx.into_iter().map(|s| (s, p(s) / threshold.inclusion_prob(self.dist.log_prob(s)))).collect())
            }
            (EstimatorKind::ReinforceWR, Draw::WithReplacement(x)) => {
                self.check_indices(x.iter())?;
                let w = 1.0 / x.len() as f64;
                Ok(x.iter().map(|&xi| (xi, w)).collect())
            }
            _ => Err(self.mismatch(kind)),
        }
    }

    /// Weights of `Σ_{j<=k-m} p(b_j) f(b_j) + (1 - Σ_{j<=k-m} p(b_j)) e`, with
    /// `e` the unordered set estimator of the last `m` elements on the domain
    /// without the summed ones.
    fn sum_and_sample_weights(&self, b: &OrderedSample, m: usize) -> Result<Vec<(usize, f64)>> {
        let k = b.len();
        if m < 1 || m >= k {
            return Err(Error::InvalidSplit { m, k });
        }
        let idx = b.indices();
        self.check_indices(idx.iter())?;
        let summed = &idx[..k - m];
        let p = |x: usize| self.dist.prob(x);
        let mut w: Vec<(usize, f64)> = summed.iter().map(|&c| (c, p(c))).collect();
        if m == 1 {
            w.push((idx[k - 1], self.dist.log_complement_mass(summed)?.exp()));
        } else {
            // (1 - p(C)) p^{D\C}(s) R^{D\C}(S, s) = p(s) R^{D\C}(S, s)
            let lr = loo_ratios_restricted(self.dist, idx, summed, 1, &self.cfg)?;
            w.extend(lr.elements.iter().zip(&lr.ratios).map(|(&s, &r)| (s, p(s) * r)));
        }
        Ok(w)
    }

    fn check_threshold(&self, sample: &OrderedSample, threshold: &Threshold) -> Result<()> {
        self.check_indices(sample.indices().iter())?;
        match *threshold {
            Threshold::WholeDomain if sample.len() != self.dist.len() => Err(Error::InconsistentThreshold),
            Threshold::Kappa(kappa) => {
                if !kappa.is_finite() || sample.perturbed().is_some_and(|g| g.iter().any(|&v| v <= kappa)) {
                    Err(Error::InconsistentThreshold)
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn check_indices<'b>(&self, xs: impl Iterator<Item = &'b usize>) -> Result<()> {
        for &x in xs {
            self.dist.check_index(x)?;
        }
        Ok(())
    }

    fn expect_set<'d>(&self, kind: EstimatorKind, draw: &'d Draw) -> Result<&'d UnorderedSample> {
        match draw {
            Draw::Set(s) => Ok(s),
            _ => Err(self.mismatch(kind)),
        }
    }

    fn mismatch(&self, kind: EstimatorKind) -> Error {
        Error::DrawMismatch { kind: kind.to_string() }
    }
}

impl EstimatorKind {
    /// The linear estimator a kind reduces to for value targets.
    fn linear_base(self) -> EstimatorKind {
        match self {
            EstimatorKind::UnorderedSetPG
            | EstimatorKind::UnorderedSetPGBaseline
            | EstimatorKind::FullUnorderedSetPG => EstimatorKind::UnorderedSet,
            EstimatorKind::IwpgBaseline | EstimatorKind::IwpgNormalized => EstimatorKind::ImportanceWeighted,
            EstimatorKind::ReinforceWRBaseline => EstimatorKind::ReinforceWR,
            k => k,
        }
    }
}

fn grad_of(dist: &CategoricalDist, f: &Objective, kind: EstimatorKind, draw: &Draw) -> Result<Vec<f64>> {
    let score = dist.softmax_score()?;
    Estimator::new(dist, f)?.with_score(&score)?.gradient(kind, draw)
}

fn value_of(dist: &CategoricalDist, f: &Objective, kind: EstimatorKind, draw: &Draw) -> Result<f64> {
    Estimator::new(dist, f)?.value(kind, draw)
}

/// `Σ_{s∈S} p(s) R(S, s) f(s)`.
pub fn unordered_set_estimate(dist: &CategoricalDist, set: &UnorderedSample, f: &Objective) -> Result<f64> {
    value_of(dist, f, EstimatorKind::UnorderedSet, &Draw::Set(set.clone()))
}

/// Stochastic sum-and-sample estimate that sums all but the last `m`
/// elements of `b`.
pub fn stoch_sum_and_sample(dist: &CategoricalDist, b: &OrderedSample, f: &Objective, m: usize) -> Result<f64> {
    value_of(dist, f, EstimatorKind::StochSumAndSample(m), &Draw::Ordered(b.clone()))
}

/// Sums the `k - 1` most probable elements and samples one from the rest.
pub fn det_sum_and_sample<R: Rng + ?Sized>(
    dist: &CategoricalDist,
    f: &Objective,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    let est = Estimator::new(dist, f)?;
    let draw = est.sample(EstimatorKind::DetSumAndSample, k, rng)?;
    est.value(EstimatorKind::DetSumAndSample, &draw)
}

/// `Σ_{s∈S} p(s) / q(s, κ) f(s)`.
pub fn importance_weighted(
    dist: &CategoricalDist,
    sample: &OrderedSample,
    threshold: Threshold,
    f: &Objective,
) -> Result<f64> {
    let draw = Draw::Thresholded { sample: sample.clone(), threshold };
    value_of(dist, f, EstimatorKind::ImportanceWeighted, &draw)
}

/// `Σ_{s∈S} grad p(s) R(S, s) f(s)` over the logits.
pub fn uspg(dist: &CategoricalDist, set: &UnorderedSample, f: &Objective) -> Result<Vec<f64>> {
    grad_of(dist, f, EstimatorKind::UnorderedSetPG, &Draw::Set(set.clone()))
}

/// Unordered set policy gradient with the leave-one-out baseline.
pub fn uspg_baseline(dist: &CategoricalDist, set: &UnorderedSample, f: &Objective) -> Result<Vec<f64>> {
    grad_of(dist, f, EstimatorKind::UnorderedSetPGBaseline, &Draw::Set(set.clone()))
}

/// `Σ_{s∈S} R(S, s) grad(p(s) f(s))` for an objective with pathwise gradient.
pub fn fuspg(dist: &CategoricalDist, set: &UnorderedSample, f: &Objective) -> Result<Vec<f64>> {
    grad_of(dist, f, EstimatorKind::FullUnorderedSetPG, &Draw::Set(set.clone()))
}

/// REINFORCE over samples with replacement, optionally with the
/// leave-one-out mean as baseline.
pub fn reinforce_wr(dist: &CategoricalDist, x: &[usize], f: &Objective, baseline: bool) -> Result<Vec<f64>> {
    let kind = if baseline { EstimatorKind::ReinforceWRBaseline } else { EstimatorKind::ReinforceWR };
    grad_of(dist, f, kind, &Draw::WithReplacement(x.to_vec()))
}

/// REINFORCE with the objective at an independent paired sample as baseline.
pub fn reinforce_sampled_baseline(
    dist: &CategoricalDist,
    x: &[usize],
    x_baseline: &[usize],
    f: &Objective,
) -> Result<GradEstimate> {
    let draw = Draw::Paired { samples: x.to_vec(), baseline: x_baseline.to_vec() };
    let grad = grad_of(dist, f, EstimatorKind::ReinforceSampledBaseline, &draw)?;
    let kind = EstimatorKind::ReinforceSampledBaseline;
    Ok(GradEstimate { grad, estimator: kind, k: x.len(), evals: kind.evals(x.len()), seed: None })
}

/// Gradient of the self-normalized sum `Σ_s p(s) / Σ_{s'} p(s') f(s)`.
pub fn risk_grad(dist: &CategoricalDist, set: &UnorderedSample, f: &Objective, form: RiskForm) -> Result<Vec<f64>> {
    let kind = match form {
        RiskForm::Direct => EstimatorKind::Risk,
        RiskForm::Baseline => EstimatorKind::RiskBaselineForm,
    };
    grad_of(dist, f, kind, &Draw::Set(set.clone()))
}

/// Importance-weighted policy gradient in the requested form.
pub fn iwpg(
    dist: &CategoricalDist,
    sample: &OrderedSample,
    threshold: Threshold,
    f: &Objective,
    form: IwpgForm,
) -> Result<Vec<f64>> {
    let kind = match form {
        IwpgForm::Plain => EstimatorKind::ImportanceWeighted,
        IwpgForm::Baseline => EstimatorKind::IwpgBaseline,
        IwpgForm::Normalized => EstimatorKind::IwpgNormalized,
    };
    grad_of(dist, f, kind, &Draw::Thresholded { sample: sample.clone(), threshold })
}
