//! Bernoulli toy problem, variance sweeps over estimators and sample sizes,
//! and gradient-descent runs.
//!
//! The toy draws `x_1..x_d` i.i.d. from `Bern(sigmoid(eta))` and minimizes
//! `E[Σ_i (x_i - p_i)^2]`. Its flat domain has `2^d` outcomes, indexed with
//! `x_1` as the most significant bit.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{CategoricalDist, Objective, ScoreFn};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, EstimatorKind};
use crate::math::sigmoid;
use crate::oracle::{exact_expectation, exact_gradient};
use crate::sampling::{seeded_rng, stream_rng};

pub const TOY_TARGET: [f64; 3] = [0.6, 0.51, 0.48];
pub const DEFAULT_REPLICATIONS: usize = 10_000;
pub const DEFAULT_STEP_SIZE: f64 = 0.1;
pub const DIVERGENCE_LIMIT: f64 = 50.0;

/// The Bernoulli toy loss for a target vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliToy {
    pub target_p: Vec<f64>,
}

impl Default for BernoulliToy {
    fn default() -> Self {
        Self { target_p: TOY_TARGET.to_vec() }
    }
}

impl BernoulliToy {
    pub fn new(target_p: Vec<f64>) -> Result<Self> {
        if target_p.is_empty() || target_p.len() > 20 || target_p.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("toy target must have 1 to 20 finite entries".into()));
        }
        Ok(Self { target_p })
    }

    pub fn dims(&self) -> usize {
        self.target_p.len()
    }

    pub fn domain_size(&self) -> usize {
        1 << self.dims()
    }

    /// The bits `x_1..x_d` of a flat index.
    pub fn bits(&self, x: usize) -> Vec<u8> {
        let d = self.dims();
        (0..d).map(|i| ((x >> (d - 1 - i)) & 1) as u8).collect()
    }

    /// Flat distribution with probabilities `Π_i σ^{x_i} (1 - σ)^{1 - x_i}`.
    pub fn dist(&self, eta: f64) -> Result<CategoricalDist> {
        // log σ(η) - log(1 - σ(η)) = η per active bit
        CategoricalDist::from_logits((0..self.domain_size()).map(|x| x.count_ones() as f64 * eta).collect())
    }

    pub fn objective(&self) -> Result<Objective> {
        Objective::from_fn(self.domain_size(), |x| {
            self.bits(x).iter().zip(&self.target_p).map(|(&b, p)| (b as f64 - p).powi(2)).sum()
        })
    }

    pub fn score(&self, eta: f64) -> ToyScore {
        ToyScore { sigma: sigmoid(eta), dims: self.dims() }
    }

    /// Loss by enumeration of the flat domain.
    pub fn loss(&self, eta: f64) -> Result<f64> {
        exact_expectation(&self.dist(eta)?, &self.objective()?)
    }

    /// `Σ_i [σ (1 - 2 p_i) + p_i^2]`.
    pub fn loss_closed_form(&self, eta: f64) -> f64 {
        let s = sigmoid(eta);
        self.target_p.iter().map(|p| s * (1.0 - 2.0 * p) + p * p).sum()
    }

    /// `dL/dη = σ (1 - σ) Σ_i (1 - 2 p_i)`.
    pub fn grad_closed_form(&self, eta: f64) -> f64 {
        let s = sigmoid(eta);
        s * (1.0 - s) * self.target_p.iter().map(|p| 1.0 - 2.0 * p).sum::<f64>()
    }

    /// `dL/dη` by enumeration through the score function.
    pub fn exact_grad(&self, eta: f64) -> Result<f64> {
        Ok(exact_gradient(&self.dist(eta)?, &self.objective()?, &self.score(eta))?[0])
    }
}

/// Score of the toy's single shared parameter:
/// `d log p(x) / dη = Σ_i (x_i - σ(η))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyScore {
    sigma: f64,
    dims: usize,
}

impl ScoreFn for ToyScore {
    fn num_params(&self) -> usize {
        1
    }

    fn add_score(&self, x: usize, weight: f64, out: &mut [f64]) {
        let ones = x.count_ones() as f64;
        out[0] += weight * (ones - self.dims as f64 * self.sigma);
    }
}

/// One sampled estimate of `dL/dη`.
pub fn toy_scalar_grad<R: Rng + ?Sized>(
    toy: &BernoulliToy,
    kind: EstimatorKind,
    eta: f64,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    let dist = toy.dist(eta)?;
    let f = toy.objective()?;
    let score = toy.score(eta);
    let est = Estimator::new(&dist, &f)?.with_score(&score)?;
    Ok(est.estimate(kind, k, rng)?.grad[0])
}

/// Grid of a variance sweep on the toy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub estimators: Vec<EstimatorKind>,
    pub k: Vec<usize>,
    pub eta: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub target_p: Option<Vec<f64>>,
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

impl SweepConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::InvalidConfig(format!("sweep config: {e}")))
    }
}

/// One `(estimator, k, eta)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub estimator: EstimatorKind,
    pub k: usize,
    pub evals: usize,
    pub eta: f64,
    pub variance: f64,
    pub log10_variance: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VarianceReport {
    pub rows: Vec<VarianceRow>,
}

impl VarianceReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row).map_err(csv_error)?;
        }
        if self.rows.is_empty() {
            w.write_record(["estimator", "k", "evals", "eta", "variance", "log10_variance", "replications", "seed"])
                .map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::InvalidConfig(format!("csv: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = csv::Reader::from_reader(reader).deserialize().collect::<std::result::Result<_, _>>();
        Ok(Self { rows: rows.map_err(csv_error)? })
    }

    /// Rows at `eta` grouped by evaluation budget, in increasing order.
    /// Only rows within a group are comparable.
    pub fn by_evals(&self, eta: f64) -> Vec<(usize, Vec<&VarianceRow>)> {
        let mut groups: Vec<(usize, Vec<&VarianceRow>)> = Vec::new();
        for row in self.rows.iter().filter(|r| r.eta == eta) {
            match groups.iter_mut().find(|(e, _)| *e == row.evals) {
                Some((_, g)) => g.push(row),
                None => groups.push((row.evals, vec![row])),
            }
        }
        groups.sort_by_key(|(e, _)| *e);
        groups
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("csv: {e}"))
}

/// Sample variance with denominator `R - 1`, zero for a single value.
/// Values are shifted by the first one, so identical values give exactly 0.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let d: Vec<f64> = xs.iter().map(|x| x - xs[0]).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (d.len() - 1) as f64
}

/// Empirical variance of `dL/dη` per `(estimator, k, eta)`. Replicate `r`
/// uses random stream `r` of the seed. Combinations with an invalid `k`
/// are skipped.
pub fn variance_sweep(cfg: &SweepConfig) -> Result<VarianceReport> {
    if cfg.replications == 0 {
        return Err(Error::InvalidConfig("replications must be at least 1".into()));
    }
    let toy = match &cfg.target_p {
        Some(p) => BernoulliToy::new(p.clone())?,
        None => BernoulliToy::default(),
    };
    let f = toy.objective()?;
    let mut rows = Vec::new();
    for &kind in &cfg.estimators {
        for &k in &cfg.k {
            if kind.check_k(k, toy.domain_size()).is_err() {
                continue;
            }
            for &eta in &cfg.eta {
                let dist = toy.dist(eta)?;
                let score = toy.score(eta);
                let est = Estimator::new(&dist, &f)?.with_score(&score)?;
                let grads: Vec<f64> = (0..cfg.replications)
                    .into_par_iter()
                    .map(|r| Ok(est.estimate(kind, k, &mut stream_rng(cfg.seed, r as u64))?.grad[0]))
                    .collect::<Result<_>>()?;
                let variance = sample_variance(&grads);
                rows.push(VarianceRow {
                    estimator: kind,
                    k,
                    evals: kind.evals(k),
                    eta,
                    variance,
                    log10_variance: variance.log10(),
                    replications: cfg.replications,
                    seed: cfg.seed,
                });
            }
        }
    }
    Ok(VarianceReport { rows })
}

/// Source of the gradient in an optimization run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSource {
    Exact,
    Estimator(EstimatorKind),
}

impl std::fmt::Display for GradientSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GradientSource::Exact => f.write_str("exact"),
            GradientSource::Estimator(kind) => write!(f, "{kind}"),
        }
    }
}

impl std::str::FromStr for GradientSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            Ok(GradientSource::Exact)
        } else {
            s.parse().map(GradientSource::Estimator)
        }
    }
}

impl Serialize for GradientSource {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GradientSource {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub source: GradientSource,
    pub k: usize,
    pub step_size: f64,
    pub steps: usize,
    pub seed: u64,
    pub eta0: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self { source: GradientSource::Exact, k: 1, step_size: DEFAULT_STEP_SIZE, steps: 100, seed: 0, eta0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptStep {
    pub step: usize,
    pub eta: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRun {
    pub config: OptConfig,
    /// Parameter and exact loss before each update and after the last.
    pub trajectory: Vec<OptStep>,
    pub diverged: bool,
}

impl OptRun {
    pub fn final_loss(&self) -> f64 {
        self.trajectory.last().map_or(f64::NAN, |s| s.loss)
    }
}

/// Plain gradient descent on `eta`. A run whose parameter leaves
/// `[-50, 50]` is flagged as diverged and stopped.
pub fn optimize(toy: &BernoulliToy, cfg: &OptConfig) -> Result<OptRun> {
    if let GradientSource::Estimator(kind) = cfg.source {
        kind.check_k(cfg.k, toy.domain_size())?;
    }
    if !cfg.step_size.is_finite() || !cfg.eta0.is_finite() {
        return Err(Error::InvalidConfig("step size and initial eta must be finite".into()));
    }
    let f = toy.objective()?;
    let mut rng = seeded_rng(cfg.seed);
    let mut eta = cfg.eta0;
    let mut trajectory = Vec::with_capacity(cfg.steps + 1);
    let mut diverged = false;
    for step in 0..=cfg.steps {
        let dist = toy.dist(eta)?;
        trajectory.push(OptStep { step, eta, loss: exact_expectation(&dist, &f)? });
        if step == cfg.steps {
            break;
        }
        let score = toy.score(eta);
        let grad = match cfg.source {
            GradientSource::Exact => exact_gradient(&dist, &f, &score)?[0],
            GradientSource::Estimator(kind) => {
                Estimator::new(&dist, &f)?.with_score(&score)?.estimate(kind, cfg.k, &mut rng)?.grad[0]
            }
        };
        eta -= cfg.step_size * grad;
        if !eta.is_finite() || eta.abs() > DIVERGENCE_LIMIT {
            diverged = true;
            break;
        }
    }
    Ok(OptRun { config: cfg.clone(), trajectory, diverged })
}
