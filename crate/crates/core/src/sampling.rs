//! Sampling with and without replacement.
//!
//! Ordered samples without replacement follow the Plackett-Luce law: draw
//! `b_1 ~ p`, then `b_2 ~ p` restricted to `D \ {b_1}`, and so on. Two
//! samplers produce that law: [`sequential_swor`] draws one element at a time
//! and [`gumbel_top_k`] perturbs every log-probability with independent
//! standard Gumbel noise and keeps the `k` largest. The Gumbel route also
//! yields the threshold `kappa`, the `(k+1)`-th largest perturbed value,
//! needed by the importance-weighted estimators. [`stochastic_beam_search`]
//! reproduces the Gumbel-top-k law on a factorized domain without flattening
//! it.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{CategoricalDist, FactorizedDist};
use crate::error::{Error, Result};
use crate::math::{log1mexp, log1pexp};

/// Counter-based generator; identical seeds give identical streams on every
/// platform.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`, used to
/// give every replicate its own deterministic stream.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `k` distinct domain indices in draw order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct OrderedSample {
    indices: Vec<usize>,
    perturbed: Option<Vec<f64>>,
}

impl OrderedSample {
    pub fn new(indices: Vec<usize>, domain_size: usize) -> Result<Self> {
        check_distinct(&indices, domain_size)?;
        Ok(Self { indices, perturbed: None })
    }

    /// Attach the perturbed log-probabilities of the retained elements.
    pub fn with_perturbed(mut self, perturbed: Vec<f64>) -> Result<Self> {
        if perturbed.len() != self.indices.len() {
            return Err(Error::InvalidSample("perturbed values do not match the sample".into()));
        }
        self.perturbed = Some(perturbed);
        Ok(self)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn perturbed(&self) -> Option<&[f64]> {
        self.perturbed.as_deref()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn to_unordered(&self) -> UnorderedSample {
        let mut indices = self.indices.clone();
        indices.sort_unstable();
        UnorderedSample { indices }
    }
}

impl From<OrderedSample> for Vec<usize> {
    fn from(s: OrderedSample) -> Self {
        s.indices
    }
}

impl TryFrom<Vec<usize>> for OrderedSample {
    type Error = Error;

    fn try_from(indices: Vec<usize>) -> Result<Self> {
        OrderedSample::new(indices, usize::MAX)
    }
}

/// Set of distinct domain indices, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct UnorderedSample {
    indices: Vec<usize>,
}

impl UnorderedSample {
    pub fn new(mut indices: Vec<usize>, domain_size: usize) -> Result<Self> {
        check_distinct(&indices, domain_size)?;
        indices.sort_unstable();
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.indices.binary_search(&x).is_ok()
    }
}

impl From<UnorderedSample> for Vec<usize> {
    fn from(s: UnorderedSample) -> Self {
        s.indices
    }
}

impl TryFrom<Vec<usize>> for UnorderedSample {
    type Error = Error;

    fn try_from(indices: Vec<usize>) -> Result<Self> {
        UnorderedSample::new(indices, usize::MAX)
    }
}

fn check_distinct(indices: &[usize], domain_size: usize) -> Result<()> {
    if indices.len() > domain_size {
        return Err(Error::InvalidSampleSize { k: indices.len(), n: domain_size });
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    if let Some(&bad) = sorted.iter().find(|&&i| i >= domain_size) {
        return Err(Error::InvalidSample(format!("index {bad} outside domain of size {domain_size}")));
    }
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidSample("indices are not distinct".into()));
    }
    Ok(())
}

/// The `(k+1)`-th largest perturbed log-probability of a Gumbel-top-k draw.
/// When the sample covers the whole domain there is no such value and every
/// inclusion probability equals one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Kappa(f64),
    WholeDomain,
}

impl Threshold {
    /// Inclusion probability `P(phi + G > kappa) = 1 - F_phi(kappa)`.
    pub fn inclusion_prob(&self, log_prob: f64) -> f64 {
        match *self {
            Threshold::Kappa(kappa) => crate::math::gumbel_survival(log_prob, kappa),
            Threshold::WholeDomain => 1.0,
        }
    }
}

/// Standard Gumbel draw `-ln(-ln U)` with `U` in the open interval
/// `(nextafter(0, 1), 1)`.
pub fn standard_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::from_bits(1));
    -(-u.ln()).ln()
}

/// Perturbed log-probabilities `phi_i + G_i`.
pub fn gumbel_perturb<R: Rng + ?Sized>(rng: &mut R, dist: &CategoricalDist) -> Vec<f64> {
    dist.log_probs().iter().map(|phi| phi + standard_gumbel(rng)).collect()
}

/// Decreasing by value, lower index first on ties.
fn rank_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Ordered sample of size `k` from the top of the perturbed log-probabilities.
pub fn gumbel_top_k<R: Rng + ?Sized>(
    rng: &mut R,
    dist: &CategoricalDist,
    k: usize,
) -> Result<(OrderedSample, Threshold)> {
    let n = dist.len();
    if k < 1 || k > n {
        return Err(Error::InvalidSampleSize { k, n });
    }
    let perturbed = gumbel_perturb(rng, dist);
    let order = rank_desc(&perturbed);
    let threshold = if k < n { Threshold::Kappa(perturbed[order[k]]) } else { Threshold::WholeDomain };
    let indices = order[..k].to_vec();
    let values = indices.iter().map(|&i| perturbed[i]).collect();
    Ok((OrderedSample { indices, perturbed: Some(values) }, threshold))
}

/// Single categorical draw.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, dist: &CategoricalDist) -> usize {
    draw_from(rng, &dist.probs(), &vec![true; dist.len()])
}

fn draw_from<R: Rng + ?Sized>(rng: &mut R, probs: &[f64], available: &[bool]) -> usize {
    let total: f64 = probs.iter().zip(available).filter(|(_, &a)| a).map(|(p, _)| p).sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, (&p, &a)) in probs.iter().zip(available).enumerate() {
        if !a {
            continue;
        }
        acc += p;
        last = Some(i);
        if target < acc {
            return i;
        }
    }
    last.expect("at least one available element")
}

/// `k` independent categorical draws.
pub fn with_replacement<R: Rng + ?Sized>(rng: &mut R, dist: &CategoricalDist, k: usize) -> Vec<usize> {
    let probs = dist.probs();
    let all = vec![true; dist.len()];
    (0..k).map(|_| draw_from(rng, &probs, &all)).collect()
}

/// Ordered sample without replacement by successive restricted draws.
pub fn sequential_swor<R: Rng + ?Sized>(rng: &mut R, dist: &CategoricalDist, k: usize) -> Result<OrderedSample> {
    let n = dist.len();
    if k < 1 || k > n {
        return Err(Error::InvalidSampleSize { k, n });
    }
    let probs = dist.probs();
    let mut available = vec![true; n];
    let mut indices = Vec::with_capacity(k);
    for _ in 0..k {
        let b = draw_from(rng, &probs, &available);
        available[b] = false;
        indices.push(b);
    }
    Ok(OrderedSample { indices, perturbed: None })
}

/// Gumbel with location `phi` conditioned on its maximum over siblings being
/// `target`, given the unconditioned sibling draw `g` and the sibling maximum
/// `max`.
fn truncated_gumbel(target: f64, g: f64, max: f64) -> f64 {
    let v = target - g + log1mexp((g - max).min(0.0));
    target - log1pexp(v)
}

#[derive(Debug, Clone)]
struct Beam {
    flat: usize,
    log_prob: f64,
    gumbel: f64,
}

/// Stochastic beam search over a factorized distribution. The `k+1` leaves
/// with the largest perturbed joint log-probabilities are found by expanding
/// one dimension at a time and keeping the `k+1` best prefixes, where the
/// perturbed value of a prefix is the maximum over its completions. Returns
/// the top `k` in decreasing order and the `(k+1)`-th as the threshold.
pub fn stochastic_beam_search<R: Rng + ?Sized>(
    rng: &mut R,
    fd: &FactorizedDist,
    k: usize,
) -> Result<(OrderedSample, Threshold)> {
    let total = fd.domain_size();
    if k < 1 || k as u128 > total {
        return Err(Error::InvalidSampleSize { k, n: total.min(usize::MAX as u128) as usize });
    }
    let width = if (k as u128) < total { k + 1 } else { k };
    let mut beams = vec![Beam { flat: 0, log_prob: 0.0, gumbel: standard_gumbel(rng) }];
    for dim in fd.dims() {
        let mut children = Vec::with_capacity(beams.len() * dim.len());
        for beam in &beams {
            let first = children.len();
            let mut max = f64::NEG_INFINITY;
            for (c, lp) in dim.log_probs().iter().enumerate() {
                let log_prob = beam.log_prob + lp;
                let g = log_prob + standard_gumbel(rng);
                max = max.max(g);
                children.push(Beam { flat: beam.flat * dim.len() + c, log_prob, gumbel: g });
            }
            for child in &mut children[first..] {
                child.gumbel = truncated_gumbel(beam.gumbel, child.gumbel, max);
            }
        }
        children.sort_by(|a, b| b.gumbel.partial_cmp(&a.gumbel).unwrap_or(Ordering::Equal).then(a.flat.cmp(&b.flat)));
        children.truncate(width);
        beams = children;
    }
    let threshold = if width > k { Threshold::Kappa(beams[k].gumbel) } else { Threshold::WholeDomain };
    beams.truncate(k);
    let sample = OrderedSample {
        indices: beams.iter().map(|b| b.flat).collect(),
        perturbed: Some(beams.iter().map(|b| b.gumbel).collect()),
    };
    Ok((sample, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> CategoricalDist {
        CategoricalDist::from_probs(p).unwrap()
    }

    #[test]
    fn gumbel_perturb_is_deterministic() {
        let d = dist(&[0.5, 0.3, 0.2]);
        let a = gumbel_perturb(&mut seeded_rng(42), &d);
        let b = gumbel_perturb(&mut seeded_rng(42), &d);
        assert_eq!(a, b);
        assert_ne!(a, gumbel_perturb(&mut seeded_rng(43), &d));
        assert_ne!(gumbel_perturb(&mut stream_rng(42, 1), &d), gumbel_perturb(&mut stream_rng(42, 2), &d));
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let mut rng = seeded_rng(7);
        let n = 1_000_000;
        let mean = (0..n).map(|_| standard_gumbel(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.577_215_664_9).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn top_k_invariants() {
        let d = dist(&[0.1, 0.2, 0.3, 0.15, 0.25]);
        let mut rng = seeded_rng(1);
        for k in 1..=5 {
            for _ in 0..200 {
                let (s, t) = gumbel_top_k(&mut rng, &d, k).unwrap();
                assert_eq!(s.len(), k);
                let u = s.to_unordered();
                assert!(u.indices().windows(2).all(|w| w[0] < w[1]));
                let g = s.perturbed().unwrap();
                assert!(g.windows(2).all(|w| w[0] > w[1]));
                match t {
                    Threshold::Kappa(kappa) => {
                        assert!(k < 5);
                        assert!(g.iter().all(|&v| kappa < v));
                    }
                    Threshold::WholeDomain => assert_eq!(k, 5),
                }
            }
        }
        assert!(gumbel_top_k(&mut rng, &d, 0).is_err());
        assert!(gumbel_top_k(&mut rng, &d, 6).is_err());
    }

    #[test]
    fn sequential_examples() {
        let d = dist(&[0.9, 0.1]);
        let mut rng = seeded_rng(3);
        let n = 200_000;
        let hits = (0..n).filter(|_| sequential_swor(&mut rng, &d, 2).unwrap().indices() == [0, 1]).count();
        assert!((hits as f64 / n as f64 - 0.9).abs() < 0.005);
        let s = sequential_swor(&mut rng, &d, 1).unwrap();
        assert_eq!(s.len(), 1);
        assert!(sequential_swor(&mut rng, &d, 3).is_err());
    }

    #[test]
    fn beam_search_full_domain() {
        let fd = FactorizedDist::from_logits(vec![vec![0.3, -0.2], vec![1.0, 0.0]]).unwrap();
        let mut rng = seeded_rng(9);
        for _ in 0..100 {
            let (s, t) = stochastic_beam_search(&mut rng, &fd, 4).unwrap();
            assert_eq!(s.to_unordered().indices(), &[0, 1, 2, 3]);
            assert_eq!(t, Threshold::WholeDomain);
        }
        for _ in 0..100 {
            let (s, t) = stochastic_beam_search(&mut rng, &fd, 2).unwrap();
            let Threshold::Kappa(kappa) = t else { panic!("expected threshold") };
            assert!(s.perturbed().unwrap().iter().all(|&g| g > kappa));
        }
        assert!(stochastic_beam_search(&mut rng, &fd, 5).is_err());
    }

    #[test]
    fn truncated_gumbel_max_child_keeps_target() {
        assert_eq!(truncated_gumbel(1.5, 0.3, 0.3), 1.5);
        let t = truncated_gumbel(1.5, -0.2, 0.3);
        assert!(t < 1.5);
    }

    #[test]
    fn samples_serialize_as_arrays() {
        let s = UnorderedSample::new(vec![3, 1], 5).unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3]");
        let o: OrderedSample = serde_json::from_str("[2,0]").unwrap();
        assert_eq!(o.indices(), &[2, 0]);
        assert!(serde_json::from_str::<UnorderedSample>("[1,1]").is_err());
        assert!(UnorderedSample::new(vec![0, 5], 5).is_err());
    }
}
