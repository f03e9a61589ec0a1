//! Finite discrete distributions stored as log-probabilities.
//!
//! A [`CategoricalDist`] is the flat view used by every sampler and
//! estimator. Structured outcomes (several independent categorical
//! dimensions) are described by a [`FactorizedDist`] and flattened in
//! row-major order: the last dimension varies fastest, so the joint outcome
//! `(c_0, .., c_{K-1})` has flat index `((c_0 * k_1 + c_1) * k_2 + ..)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::logsumexp;

/// Smallest log-probability a parameterized distribution may assign,
/// `ln(1e-300)`.
pub const LOG_PROB_FLOOR: f64 = -690.775_527_898_213_7;

/// Default cap on flattened / enumerated domain sizes.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    log_probs: Vec<f64>,
    logits: Option<Vec<f64>>,
}

impl CategoricalDist {
    /// Softmax distribution. Logits more than `ln(1e-300) - ln(n)` below the
    /// maximum are raised to that level so every probability stays at least
    /// `1e-300`.
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() || logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidLogits);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = max + LOG_PROB_FLOOR + (logits.len() as f64).ln();
        let logits: Vec<f64> = logits.into_iter().map(|l| l.max(floor)).collect();
        let lse = logsumexp(&logits);
        let log_probs = logits.iter().map(|l| l - lse).collect();
        Ok(Self { log_probs, logits: Some(logits) })
    }

    /// Distribution proportional to `probs`, parameterized by `ln(probs)`.
    /// Zero entries are floored like very negative logits.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidLogits);
        }
        let max = probs.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::InvalidLogits);
        }
        let floor = max.ln() + LOG_PROB_FLOOR + (probs.len() as f64).ln();
        Self::from_logits(probs.iter().map(|p| if *p > 0.0 { p.ln() } else { floor }).collect())
    }

    /// Distribution without a parameterization; gradients are unavailable.
    pub fn from_log_probs(log_probs: Vec<f64>) -> Result<Self> {
        let mut dist = Self::from_logits(log_probs)?;
        dist.logits = None;
        Ok(dist)
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn logits(&self) -> Option<&[f64]> {
        self.logits.as_deref()
    }

    pub fn log_prob(&self, x: usize) -> f64 {
        self.log_probs[x]
    }

    pub fn prob(&self, x: usize) -> f64 {
        self.log_probs[x].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub(crate) fn check_index(&self, x: usize) -> Result<()> {
        if x < self.len() {
            Ok(())
        } else {
            Err(Error::InvalidSample(format!("index {x} outside domain of size {}", self.len())))
        }
    }

    fn membership(&self, set: &[usize]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.len()];
        for &c in set {
            self.check_index(c)?;
            mask[c] = true;
        }
        Ok(mask)
    }

    /// `ln sum_{x in set} p(x)`.
    pub fn log_mass(&self, set: &[usize]) -> f64 {
        let terms: Vec<f64> = set.iter().map(|&i| self.log_probs[i]).collect();
        logsumexp(&terms)
    }

    /// `ln(1 - sum_{c in excluded} p(c))`, summed over the complement so no
    /// cancellation occurs. Duplicates in `excluded` are ignored.
    pub fn log_complement_mass(&self, excluded: &[usize]) -> Result<f64> {
        let mask = self.membership(excluded)?;
        let terms: Vec<f64> = self.log_probs.iter().zip(&mask).filter(|(_, &m)| !m).map(|(l, _)| *l).collect();
        Ok(logsumexp(&terms))
    }

    /// Log-probability of `x` under the distribution restricted to `D \ excluded`.
    pub fn restricted_log_prob(&self, excluded: &[usize], x: usize) -> Result<f64> {
        self.check_index(x)?;
        if excluded.contains(&x) {
            return Err(Error::InvalidRestriction(x));
        }
        let log_rest = self.log_complement_mass(excluded)?;
        if log_rest <= (1e-12f64).ln() {
            return Err(Error::DegenerateRestriction);
        }
        Ok(self.log_probs[x] - log_rest)
    }

    /// The distribution restricted to `D \ excluded`, together with the
    /// original index of every retained element.
    pub fn restrict(&self, excluded: &[usize]) -> Result<(CategoricalDist, Vec<usize>)> {
        let mask = self.membership(excluded)?;
        let keep: Vec<usize> = (0..self.len()).filter(|&i| !mask[i]).collect();
        if keep.is_empty() {
            return Err(Error::DegenerateRestriction);
        }
        let log_rest = self.log_complement_mass(excluded)?;
        let log_probs = keep.iter().map(|&i| self.log_probs[i] - log_rest).collect();
        Ok((CategoricalDist { log_probs, logits: None }, keep))
    }

    /// `d log p(x) / d logits = onehot(x) - probs`.
    pub fn grad_log_prob(&self, x: usize) -> Result<Vec<f64>> {
        self.check_index(x)?;
        if self.logits.is_none() {
            return Err(Error::NoParameterization);
        }
        let mut g: Vec<f64> = self.probs().into_iter().map(|p| -p).collect();
        g[x] += 1.0;
        Ok(g)
    }

    /// Softmax score function over the logits.
    pub fn softmax_score(&self) -> Result<SoftmaxScore> {
        if self.logits.is_none() {
            return Err(Error::NoParameterization);
        }
        Ok(SoftmaxScore { probs: self.probs() })
    }
}

/// Score function `x -> grad_theta log p_theta(x)` for some parameter vector
/// `theta`. Estimators only ever need weighted sums of scores, so the trait
/// accumulates into a caller-provided buffer.
pub trait ScoreFn: Send + Sync {
    fn num_params(&self) -> usize;

    /// `out += weight * grad log p(x)`.
    fn add_score(&self, x: usize, weight: f64, out: &mut [f64]);

    fn score(&self, x: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_params()];
        self.add_score(x, 1.0, &mut out);
        out
    }
}

/// Softmax parameterization: the parameters are the logits.
#[derive(Debug, Clone)]
pub struct SoftmaxScore {
    probs: Vec<f64>,
}

impl ScoreFn for SoftmaxScore {
    fn num_params(&self) -> usize {
        self.probs.len()
    }

    fn add_score(&self, x: usize, weight: f64, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.probs) {
            *o -= weight * p;
        }
        out[x] += weight;
    }
}

/// Product of independent categorical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedDist {
    dims: Vec<CategoricalDist>,
}

impl FactorizedDist {
    pub fn from_logits(per_dim_logits: Vec<Vec<f64>>) -> Result<Self> {
        if per_dim_logits.is_empty() {
            return Err(Error::InvalidLogits);
        }
        let dims = per_dim_logits.into_iter().map(CategoricalDist::from_logits).collect::<Result<Vec<_>>>()?;
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[CategoricalDist] {
        &self.dims
    }

    pub fn domain_size(&self) -> u128 {
        self.dims.iter().fold(1u128, |acc, d| acc.saturating_mul(d.len() as u128))
    }

    /// Flat index of a joint outcome.
    pub fn ravel(&self, joint: &[usize]) -> usize {
        joint.iter().zip(&self.dims).fold(0usize, |acc, (&c, d)| acc * d.len() + c)
    }

    /// Joint outcome of a flat index.
    pub fn unravel(&self, mut index: usize) -> Vec<usize> {
        let mut joint = vec![0; self.dims.len()];
        for (slot, d) in joint.iter_mut().zip(&self.dims).rev() {
            *slot = index % d.len();
            index /= d.len();
        }
        joint
    }

    pub fn log_prob_joint(&self, joint: &[usize]) -> f64 {
        joint.iter().zip(&self.dims).map(|(&c, d)| d.log_prob(c)).sum()
    }

    /// Joint distribution over the row-major product domain.
    pub fn flatten(&self, cap: usize) -> Result<CategoricalDist> {
        let size = self.domain_size();
        if size > cap as u128 {
            return Err(Error::DomainTooLarge { size, cap });
        }
        let mut log_probs = vec![0.0];
        for d in &self.dims {
            let mut next = Vec::with_capacity(log_probs.len() * d.len());
            for &prefix in &log_probs {
                next.extend(d.log_probs().iter().map(|l| prefix + l));
            }
            log_probs = next;
        }
        CategoricalDist::from_log_probs(log_probs)
    }
}

/// Table-backed objective `f(x)` with an optional pathwise gradient
/// `d f_theta(x) / d theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    values: Vec<f64>,
    param_grad: Option<Vec<Vec<f64>>>,
}

impl Objective {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidObjective);
        }
        Ok(Self { values, param_grad: None })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((0..n).map(f).collect())
    }

    pub fn with_param_grad(mut self, grads: Vec<Vec<f64>>) -> Result<Self> {
        if grads.len() != self.values.len() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::InvalidObjective);
        }
        self.param_grad = Some(grads);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, x: usize) -> f64 {
        self.values[x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn param_grad(&self, x: usize) -> Option<&[f64]> {
        self.param_grad.as_ref().map(|g| g[x].as_slice())
    }

    pub fn has_param_grad(&self) -> bool {
        self.param_grad.is_some()
    }

    /// `f + c`, keeping the pathwise gradient.
    pub fn shifted(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v + c).collect(), param_grad: self.param_grad.clone() }
    }
}

/// JSON form of a distribution: a bare probability array, `{"logits": [..]}`
/// or `{"dims": [[..], ..]}` (per-dimension logits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistSpec {
    Probs(Vec<f64>),
    Logits { logits: Vec<f64> },
    Dims { dims: Vec<Vec<f64>> },
}

impl DistSpec {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::InvalidConfig(format!("distribution: {e}")))
    }

    pub fn to_categorical(&self, cap: usize) -> Result<CategoricalDist> {
        match self {
            DistSpec::Probs(p) => CategoricalDist::from_probs(p),
            DistSpec::Logits { logits } => CategoricalDist::from_logits(logits.clone()),
            DistSpec::Dims { dims } => FactorizedDist::from_logits(dims.clone())?.flatten(cap),
        }
    }
}

impl From<&CategoricalDist> for DistSpec {
    fn from(dist: &CategoricalDist) -> Self {
        DistSpec::Logits { logits: dist.logits().unwrap_or(dist.log_probs()).to_vec() }
    }
}
