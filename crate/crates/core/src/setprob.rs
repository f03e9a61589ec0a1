//! Probabilities of unordered samples without replacement and the
//! leave-one-out ratios built from them.
//!
//! Every quantity here has the form `p^{D'}(U)`: the probability that a
//! sample of size `|U|` drawn without replacement from the domain
//! `D' = U ∪ R` is exactly `U`, where `R = D \ S` is the complement of the
//! full sample `S`. Leave-one-out and restricted probabilities only change
//! which members of `S` make up `U`, so one precomputation serves all of
//! them. Three backends evaluate `p^{D'}(U)`:
//!
//! * naive: sum over all `|U|!` orderings of the sequential draw
//!   probabilities;
//! * exact: the inclusion–exclusion identity
//!   `p^{D'}(U) = Σ_{c ⊆ U} (-1)^{|c|} r / (r + m_c)` with `r = p(R)` and
//!   `m_c = p(c)`, accumulated with compensated summation;
//! * integral: the Gumbel representation `P(min_{i∈U} G_i > G_R)`, a one
//!   dimensional integral evaluated by the trapezoid rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::CategoricalDist;
use crate::error::{Error, Result};
use crate::math::{log1mexp, log_gumbel_survival, logsumexp, CompensatedSum, LogSumExp};

/// Largest sample for which the naive backend may enumerate orderings.
pub const NAIVE_MAX_K: usize = 8;
/// Default largest sample handled by inclusion–exclusion.
pub const EXACT_MAX_K: usize = 20;
/// Hard limit on the inclusion–exclusion subset table.
const EXACT_HARD_LIMIT: usize = 30;
/// Log-integrand level, relative to its maximum, below which the integration
/// window is cut.
const WINDOW_DEPTH: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Naive,
    Exact,
    Integral,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Naive => "naive",
            Backend::Exact => "exact",
            Backend::Integral => "integral",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Backend::Naive),
            "exact" => Ok(Backend::Exact),
            "integral" => Ok(Backend::Integral),
            _ => Err(Error::InvalidConfig(format!("unknown backend '{s}'"))),
        }
    }
}

/// Placement of the trapezoid nodes for the integral backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRule {
    /// Uniform in `x = ln(-ln v)` over a window chosen from bounds on the
    /// integrand.
    LogLog,
    /// Uniform in `v ∈ (0, 1)` after the substitution with shift `a`.
    Uniform,
}

impl fmt::Display for NodeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeRule::LogLog => "log-log",
            NodeRule::Uniform => "uniform",
        })
    }
}

impl FromStr for NodeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-log" => Ok(NodeRule::LogLog),
            "uniform" => Ok(NodeRule::Uniform),
            _ => Err(Error::InvalidConfig(format!("unknown node rule '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralConfig {
    pub nodes: usize,
    /// Shift `a` of the uniform rule.
    pub shift: f64,
    pub rule: NodeRule,
}

impl Default for IntegralConfig {
    fn default() -> Self {
        Self { nodes: 1000, shift: 5.0, rule: NodeRule::LogLog }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetProbConfig {
    /// Forced backend; `None` picks exact up to `exact_max_k` and integral
    /// beyond.
    pub backend: Option<Backend>,
    pub exact_max_k: usize,
    /// Inclusion–exclusion results smaller than this fraction of the summed
    /// term magnitudes are recomputed with the integral backend.
    pub cancellation_tol: f64,
    pub integral: IntegralConfig,
}

impl Default for SetProbConfig {
    fn default() -> Self {
        Self { backend: None, exact_max_k: EXACT_MAX_K, cancellation_tol: 1e-7, integral: IntegralConfig::default() }
    }
}

impl SetProbConfig {
    pub fn with_backend(backend: Backend) -> Self {
        Self { backend: Some(backend), ..Self::default() }
    }

    fn backend_for(&self, k: usize) -> Result<Backend> {
        let backend = self.backend.unwrap_or(if k <= self.exact_max_k { Backend::Exact } else { Backend::Integral });
        match backend {
            Backend::Naive if k > NAIVE_MAX_K => Err(Error::TooManyPermutations { k, limit: NAIVE_MAX_K }),
            Backend::Exact if k > self.exact_max_k.min(EXACT_HARD_LIMIT) => {
                Err(Error::TooManySubsets { k, limit: self.exact_max_k.min(EXACT_HARD_LIMIT) })
            }
            Backend::Integral if self.integral.nodes < 2 => {
                Err(Error::InvalidConfig("integral backend needs at least 2 nodes".into()))
            }
            b => Ok(b),
        }
    }
}

/// `S \ C` together with the mass of `D \ S`.
struct SetContext {
    elements: Vec<usize>,
    log_p: Vec<f64>,
    /// `ln p(D \ S)`; `-inf` when `S` is the whole domain.
    log_rest: f64,
}

impl SetContext {
    fn new(dist: &CategoricalDist, set: &[usize], excluded: &[usize]) -> Result<Self> {
        let n = dist.len();
        let mut in_set = vec![false; n];
        for &s in set {
            dist.check_index(s)?;
            if in_set[s] {
                return Err(Error::InvalidSample("set elements are not distinct".into()));
            }
            in_set[s] = true;
        }
        let mut is_excluded = vec![false; n];
        for &c in excluded {
            dist.check_index(c)?;
            if !in_set[c] {
                return Err(Error::InvalidSample(format!("excluded element {c} is not in the set")));
            }
            is_excluded[c] = true;
        }
        let elements: Vec<usize> = (0..n).filter(|&i| in_set[i] && !is_excluded[i]).collect();
        let log_p = elements.iter().map(|&i| dist.log_prob(i)).collect();
        let rest: Vec<f64> = (0..n).filter(|&i| !in_set[i]).map(|i| dist.log_prob(i)).collect();
        Ok(Self { elements, log_p, log_rest: logsumexp(&rest) })
    }

    fn len(&self) -> usize {
        self.elements.len()
    }

    fn covers_domain(&self) -> bool {
        self.log_rest == f64::NEG_INFINITY
    }

    /// `ln p(D \ C)`, the normalizer of the restricted distribution.
    fn log_domain_mass(&self) -> f64 {
        let mut acc = LogSumExp::default();
        acc.add(self.log_rest);
        self.log_p.iter().for_each(|&l| acc.add(l));
        acc.value()
    }
}

/// Result of one inclusion–exclusion sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactDiagnostics {
    /// The signed sum itself, a probability in linear space.
    pub value: f64,
    /// Sum of the magnitudes of all terms.
    pub abs_total: f64,
    /// `|value| / abs_total`; small values signal cancellation.
    pub relative_magnitude: f64,
}

/// Evaluates `ln p^{D'}(U)` for subsets `U` of the free elements, given by
/// the positions dropped from the full set.
struct Evaluator<'a> {
    ctx: &'a SetContext,
    backend: Backend,
    cfg: &'a SetProbConfig,
    /// Linear masses scaled by `exp(-scale)`: members, rest, and every subset.
    p: Vec<f64>,
    r: f64,
    subset_mass: Vec<f64>,
    fallbacks: usize,
}

impl<'a> Evaluator<'a> {
    fn new(ctx: &'a SetContext, backend: Backend, cfg: &'a SetProbConfig) -> Self {
        let mut ev = Evaluator { ctx, backend, cfg, p: Vec::new(), r: 0.0, subset_mass: Vec::new(), fallbacks: 0 };
        if backend != Backend::Integral {
            let scale = ctx.log_p.iter().copied().fold(ctx.log_rest, f64::max);
            ev.p = ctx.log_p.iter().map(|l| (l - scale).exp()).collect();
            ev.r = (ctx.log_rest - scale).exp();
        }
        if backend == Backend::Exact {
            let k = ctx.len();
            let mut mass = vec![0.0; 1 << k];
            for mask in 1usize..(1 << k) {
                let low = mask.trailing_zeros() as usize;
                mass[mask] = mass[mask & (mask - 1)] + ev.p[low];
            }
            ev.subset_mass = mass;
        }
        ev
    }

    fn full_mask(&self) -> usize {
        (1usize << self.ctx.len()) - 1
    }

    fn mask_without(&self, drop: &[usize]) -> usize {
        drop.iter().fold(self.full_mask(), |m, &i| m & !(1 << i))
    }

    fn log_prob(&mut self, drop: &[usize]) -> f64 {
        if self.ctx.covers_domain() {
            return 0.0;
        }
        match self.backend {
            Backend::Naive => naive_prob(&self.p, self.r, self.mask_without(drop)).ln(),
            Backend::Exact => {
                let diag = self.exact(self.mask_without(drop));
                if diag.value > 0.0 && diag.relative_magnitude >= self.cfg.cancellation_tol {
                    diag.value.ln()
                } else {
                    self.fallbacks += 1;
                    integral_log_prob(self.ctx, drop, &self.cfg.integral)
                }
            }
            Backend::Integral => integral_log_prob(self.ctx, drop, &self.cfg.integral),
        }
    }

    fn exact(&self, mask: usize) -> ExactDiagnostics {
        let mut sum = CompensatedSum::default();
        let mut sub = mask;
        loop {
            let term = self.r / (self.r + self.subset_mass[sub]);
            sum.add(if sub.count_ones().is_multiple_of(2) { term } else { -term });
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        let value = sum.value();
        let abs_total = sum.abs_total();
        ExactDiagnostics { value, abs_total, relative_magnitude: value.abs() / abs_total }
    }
}

/// Sum over orderings of the members of `mask`, drawn one at a time from the
/// members still available plus the rest mass `r`.
fn naive_prob(p: &[f64], r: f64, mask: usize) -> f64 {
    if mask == 0 {
        return 1.0;
    }
    let members: Vec<usize> = (0..p.len()).filter(|&i| mask & (1 << i) != 0).collect();
    let denom = r + members.iter().map(|&i| p[i]).sum::<f64>();
    members.iter().map(|&i| p[i] / denom * naive_prob(p, r, mask & !(1 << i))).sum()
}

/// `ln p^{D'}(U)` by quadrature of the Gumbel representation.
fn integral_log_prob(ctx: &SetContext, drop: &[usize], cfg: &IntegralConfig) -> f64 {
    let log_p: Vec<f64> = ctx.log_p.iter().enumerate().filter(|(i, _)| !drop.contains(i)).map(|(_, &l)| l).collect();
    match cfg.rule {
        NodeRule::LogLog => loglog_integral(&log_p, ctx.log_rest, cfg.nodes),
        NodeRule::Uniform => uniform_integral(&log_p, ctx.log_rest, cfg.nodes, cfg.shift),
    }
}

/// Trapezoid rule on the log-integrand `log_f` over `[lo, hi]` with `nodes`
/// equally spaced nodes, returned as a log.
pub(crate) fn log_trapezoid(lo: f64, hi: f64, nodes: usize, mut log_f: impl FnMut(f64) -> f64) -> f64 {
    let h = (hi - lo) / (nodes - 1) as f64;
    let mut acc = LogSumExp::default();
    for j in 0..nodes {
        let x = lo + h * j as f64;
        let w = if j == 0 || j == nodes - 1 { 0.5f64.ln() } else { 0.0 };
        acc.add(log_f(x) + w);
    }
    acc.value() + h.ln()
}

/// `P(min_{i} G_i > G_R)` with `G_i ~ Gumbel(phi_i)` and `G_R ~ Gumbel(phi_R)`.
/// With `x = phi_R - kappa` the density of `G_R` becomes `e^x exp(-e^x) dx`
/// and each inclusion factor `1 - exp(-e^{x + d_i})`, `d_i = phi_i - phi_R`.
fn loglog_integral(log_p: &[f64], log_rest: f64, nodes: usize) -> f64 {
    let d: Vec<f64> = log_p.iter().map(|l| l - log_rest).collect();
    let log_f = |x: f64| x - x.exp() + d.iter().map(|di| log_gumbel_survival(x + di)).sum::<f64>();
    let (lo, hi) = loglog_window(&d, &log_f);
    log_trapezoid(lo, hi, nodes, log_f)
}

/// Window outside which the integrand stays `WINDOW_DEPTH` nats below a
/// lower bound on its maximum. Below zero the integrand is bounded by
/// `exp(x + Σ min(0, x + d_i))`, above zero by `exp(x - e^x)`.
fn loglog_window(d: &[f64], log_f: &impl Fn(f64) -> f64) -> (f64, f64) {
    let d_max = d.iter().copied().fold(0.0f64, f64::max);
    let k = d.len() as f64;
    let mut peak = log_f(0.0).max(log_f((k + 1.0).ln()));
    for &di in d {
        peak = peak.max(log_f(-di));
    }
    let start = -d_max - 2.0;
    let probes = 200;
    for j in 0..=probes {
        peak = peak.max(log_f(start + (2.0 - start) * j as f64 / probes as f64));
    }
    let target = peak - WINDOW_DEPTH;

    let envelope = |x: f64| x + d.iter().map(|di| (x + di).min(0.0)).sum::<f64>();
    let mut lo = -1.0;
    while envelope(lo) > target {
        lo *= 2.0;
    }
    let (lo, _) = bisect(lo, 0.0, |x| envelope(x) > target);

    let upper = |x: f64| x - x.exp();
    let mut hi = 1.0;
    while upper(hi) > target {
        hi *= 2.0;
    }
    let (_, hi) = bisect(0.0, hi, |x| upper(x) <= target);
    (lo, hi)
}

/// Brackets the switch point of a monotone predicate that fails at `a` and
/// holds at `b`.
fn bisect(mut a: f64, mut b: f64, above: impl Fn(f64) -> bool) -> (f64, f64) {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if above(m) {
            b = m;
        } else {
            a = m;
        }
    }
    (a, b)
}

/// Trapezoid on `v ∈ (0, 1)` of
/// `e^{a+phi_R} v^{e^{a+phi_R}-1} Π_i (1 - v^{e^{a+phi_i}})` with
/// log-probabilities normalized over `U ∪ R`. The node at `v = 0` is dropped.
fn uniform_integral(log_p: &[f64], log_rest: f64, nodes: usize, shift: f64) -> f64 {
    let mut all = log_p.to_vec();
    all.push(log_rest);
    let log_norm = logsumexp(&all);
    let b = (shift + log_rest - log_norm).exp();
    let c: Vec<f64> = log_p.iter().map(|l| (shift + l - log_norm).exp()).collect();
    let h = 1.0 / (nodes - 1) as f64;
    let mut acc = LogSumExp::default();
    for j in 1..nodes {
        let v = h * j as f64;
        let lv = v.ln();
        let w = if j == nodes - 1 { 0.5f64.ln() } else { 0.0 };
        let log_f = b.ln() + (b - 1.0) * lv + c.iter().map(|ci| log1mexp(ci * lv)).sum::<f64>();
        acc.add(log_f + w);
    }
    acc.value() + h.ln()
}

/// `ln p^{D \ C}(S \ C)` with an explicit backend choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetProb {
    pub log_p: f64,
    pub backend: Backend,
    /// Set when inclusion–exclusion lost too much precision and the value
    /// came from the integral backend.
    pub fell_back: bool,
}

/// `ln p^{D \ C}(S \ C)`: the log-probability that a sample of size
/// `|S \ C|` drawn without replacement from `D \ C` is exactly `S \ C`.
pub fn log_p_set(dist: &CategoricalDist, set: &[usize], excluded: &[usize], cfg: &SetProbConfig) -> Result<SetProb> {
    let ctx = SetContext::new(dist, set, excluded)?;
    let backend = cfg.backend_for(ctx.len())?;
    let mut ev = Evaluator::new(&ctx, backend, cfg);
    let log_p = ev.log_prob(&[]);
    Ok(SetProb { log_p, backend, fell_back: ev.fallbacks > 0 })
}

/// `ln p(S)` by summing over all orderings. Limited to `|S| <= 8`.
pub fn log_p_set_naive(dist: &CategoricalDist, set: &[usize]) -> Result<f64> {
    log_p_set_naive_restricted(dist, set, &[])
}

pub fn log_p_set_naive_restricted(dist: &CategoricalDist, set: &[usize], excluded: &[usize]) -> Result<f64> {
    Ok(log_p_set(dist, set, excluded, &SetProbConfig::with_backend(Backend::Naive))?.log_p)
}

/// `ln p^{D \ C}(S \ C)` by inclusion–exclusion, recomputed by quadrature
/// when cancellation destroys precision. Limited to `|S \ C| <= 20`.
pub fn log_p_set_exact(dist: &CategoricalDist, set: &[usize], excluded: &[usize]) -> Result<f64> {
    Ok(log_p_set(dist, set, excluded, &SetProbConfig::with_backend(Backend::Exact))?.log_p)
}

/// The raw inclusion–exclusion sum for `p^{D \ C}(S \ C)` without fallback.
pub fn exact_diagnostics(dist: &CategoricalDist, set: &[usize], excluded: &[usize]) -> Result<ExactDiagnostics> {
    let ctx = SetContext::new(dist, set, excluded)?;
    let cfg = SetProbConfig::with_backend(Backend::Exact);
    cfg.backend_for(ctx.len())?;
    if ctx.covers_domain() {
        return Ok(ExactDiagnostics { value: 1.0, abs_total: 1.0, relative_magnitude: 1.0 });
    }
    let ev = Evaluator::new(&ctx, Backend::Exact, &cfg);
    Ok(ev.exact(ev.full_mask()))
}

/// `ln p^{D \ C}(S \ C)` by quadrature.
pub fn log_p_set_integral(
    dist: &CategoricalDist,
    set: &[usize],
    excluded: &[usize],
    cfg: &IntegralConfig,
) -> Result<f64> {
    let cfg = SetProbConfig { backend: Some(Backend::Integral), integral: *cfg, ..Default::default() };
    Ok(log_p_set(dist, set, excluded, &cfg)?.log_p)
}

/// Leave-one-out ratios of a sample, aligned with `elements` (sorted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooRatios {
    pub elements: Vec<usize>,
    /// `R(S, s) = p^{D\{s}}(S\{s}) / p(S)`.
    pub ratios: Vec<f64>,
    pub log_p_set: f64,
    /// `second_order[i][j] = R^{D\{s_i}}(S, s_j)`, with ones on the diagonal.
    pub second_order: Option<Vec<Vec<f64>>>,
    pub backend: Backend,
    /// Number of inclusion–exclusion sums recomputed by quadrature.
    pub fallbacks: usize,
}

/// First (`order = 1`) or first and second (`order = 2`) order
/// leave-one-out ratios of `set`.
pub fn loo_ratios(dist: &CategoricalDist, set: &[usize], order: u8, cfg: &SetProbConfig) -> Result<LooRatios> {
    loo_ratios_restricted(dist, set, &[], order, cfg)
}

/// Leave-one-out ratios on the restricted domain `D \ C` for the elements of
/// `S \ C`: `R^{D\C}(S, s) = p^{D\C\{s}}(S\C\{s}) / p^{D\C}(S\C)`.
/// `log_p_set` is `ln p^{D\C}(S\C)`, assembled as
/// `Σ_s p^{D\C}(s) p^{D\C\{s}}(S\C\{s})`.
pub fn loo_ratios_restricted(
    dist: &CategoricalDist,
    set: &[usize],
    excluded: &[usize],
    order: u8,
    cfg: &SetProbConfig,
) -> Result<LooRatios> {
    if order != 1 && order != 2 {
        return Err(Error::InvalidConfig(format!("ratio order must be 1 or 2, got {order}")));
    }
    let ctx = SetContext::new(dist, set, excluded)?;
    let k = ctx.len();
    if k == 0 {
        return Err(Error::InvalidSample("no elements left after exclusion".into()));
    }
    let backend = cfg.backend_for(k)?;
    if ctx.covers_domain() {
        return Ok(LooRatios {
            elements: ctx.elements.clone(),
            ratios: vec![1.0; k],
            log_p_set: 0.0,
            second_order: (order == 2).then(|| vec![vec![1.0; k]; k]),
            backend,
            fallbacks: 0,
        });
    }
    let mut ev = Evaluator::new(&ctx, backend, cfg);
    let log_first: Vec<f64> = (0..k).map(|i| ev.log_prob(&[i])).collect();
    let log_norm = ctx.log_domain_mass();
    let terms: Vec<f64> = (0..k).map(|i| ctx.log_p[i] - log_norm + log_first[i]).collect();
    let log_p_set = logsumexp(&terms);
    let ratios = log_first.iter().map(|l| (l - log_p_set).exp()).collect();
    let second_order = (order == 2).then(|| {
        let mut r2 = vec![vec![1.0; k]; k];
        for i in 0..k {
            for j in (i + 1)..k {
                let l = ev.log_prob(&[i, j]);
                r2[i][j] = (l - log_first[i]).exp();
                r2[j][i] = (l - log_first[j]).exp();
            }
        }
        r2
    });
    let fallbacks = ev.fallbacks;
    Ok(LooRatios { elements: ctx.elements.clone(), ratios, log_p_set, second_order, backend, fallbacks })
}
