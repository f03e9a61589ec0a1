use std::collections::HashMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use sworgrad::sampling::{gumbel_perturb, gumbel_top_k, seeded_rng, sequential_swor, stochastic_beam_search};
use sworgrad::setprob::log_p_set_exact;
use sworgrad::{CategoricalDist, FactorizedDist};

const DRAWS: usize = 1_000_000;

/// Probability of an ordered sample drawn one element at a time.
fn ordered_prob(p: &[f64], order: &[usize]) -> f64 {
    let mut used = 0.0;
    order.iter().fold(1.0, |acc, &b| {
        let v = acc * p[b] / (1.0 - used);
        used += p[b];
        v
    })
}

fn permutations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest, k - 1) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = permutations(&(0..n).collect::<Vec<_>>(), k)
        .into_iter()
        .filter(|c| c.windows(2).all(|w| w[0] < w[1]))
        .collect();
    out.sort();
    out
}

fn total_variation<K: std::hash::Hash + Eq>(counts: &HashMap<K, usize>, law: &HashMap<K, f64>) -> f64 {
    let mut tv = 0.0;
    for (key, &p) in law {
        let freq = *counts.get(key).unwrap_or(&0) as f64 / DRAWS as f64;
        tv += (freq - p).abs();
    }
    assert!(counts.keys().all(|k| law.contains_key(k)), "sample outside the support");
    tv / 2.0
}

/// Pearson goodness-of-fit p-value, pooling cells with expected count below 5.
fn chi_square_p<K: std::hash::Hash + Eq>(counts: &HashMap<K, usize>, law: &HashMap<K, f64>) -> f64 {
    let total = counts.values().sum::<usize>() as f64;
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (key, &p) in law {
        let obs = *counts.get(key).unwrap_or(&0) as f64;
        let exp = p * total;
        if exp < 5.0 {
            pooled_obs += obs;
            pooled_exp += exp;
        } else {
            stat += (obs - exp).powi(2) / exp;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    ChiSquared::new((cells - 1) as f64).unwrap().sf(stat)
}

fn count<K: std::hash::Hash + Eq>(draws: impl Iterator<Item = K>) -> HashMap<K, usize> {
    let mut counts = HashMap::new();
    for key in draws {
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

#[test]
fn gumbel_max_is_categorical() {
    let p = [0.35, 0.25, 0.2, 0.15, 0.05];
    let d = CategoricalDist::from_probs(&p).unwrap();
    let mut rng = seeded_rng(11);
    let counts = count((0..DRAWS).map(|_| {
        let g = gumbel_perturb(&mut rng, &d);
        (0..5).max_by(|&a, &b| g[a].partial_cmp(&g[b]).unwrap()).unwrap()
    }));
    let law: HashMap<usize, f64> = p.iter().copied().enumerate().collect();
    assert!(total_variation(&counts, &law) < 0.01);
    assert!(chi_square_p(&counts, &law) > 0.001);
}

#[test]
fn top_k_pairs_follow_sequential_law() {
    let p = [0.5, 0.3, 0.2];
    let d = CategoricalDist::from_probs(&p).unwrap();
    let law: HashMap<Vec<usize>, f64> =
        permutations(&[0, 1, 2], 2).into_iter().map(|o| (o.clone(), ordered_prob(&p, &o))).collect();
    let mut rng = seeded_rng(12);
    let counts = count((0..DRAWS).map(|_| gumbel_top_k(&mut rng, &d, 2).unwrap().0.indices().to_vec()));
    assert!(total_variation(&counts, &law) < 0.01);
    assert!(chi_square_p(&counts, &law) > 0.001);

    let set_law: HashMap<Vec<usize>, f64> = combinations(3, 2)
        .into_iter()
        .map(|s| {
            let lp = log_p_set_exact(&d, &s, &[]).unwrap();
            (s, lp.exp())
        })
        .collect();
    let mut rng = seeded_rng(13);
    let sets = count((0..DRAWS).map(|_| gumbel_top_k(&mut rng, &d, 2).unwrap().0.to_unordered().indices().to_vec()));
    assert!(total_variation(&sets, &set_law) < 0.01);
}

#[test]
fn orderings_agree_between_samplers() {
    let p = [0.4, 0.3, 0.2, 0.1];
    let d = CategoricalDist::from_probs(&p).unwrap();
    let law: HashMap<Vec<usize>, f64> =
        permutations(&[0, 1, 2, 3], 4).into_iter().map(|o| (o.clone(), ordered_prob(&p, &o))).collect();
    let mut rng = seeded_rng(14);
    let gumbel = count((0..DRAWS).map(|_| gumbel_top_k(&mut rng, &d, 4).unwrap().0.indices().to_vec()));
    let sequential = count((0..DRAWS).map(|_| sequential_swor(&mut rng, &d, 4).unwrap().indices().to_vec()));
    assert!(chi_square_p(&gumbel, &law) > 0.001);
    assert!(chi_square_p(&sequential, &law) > 0.001);
    assert!(total_variation(&gumbel, &law) < 0.01);
    assert!(total_variation(&sequential, &law) < 0.01);

    // two-sample homogeneity over all 24 orderings
    let mut stat = 0.0;
    for key in law.keys() {
        let a = *gumbel.get(key).unwrap_or(&0) as f64;
        let b = *sequential.get(key).unwrap_or(&0) as f64;
        if a + b > 0.0 {
            stat += (a - b).powi(2) / (a + b);
        }
    }
    let p_value = ChiSquared::new((law.len() - 1) as f64).unwrap().sf(stat);
    assert!(p_value > 0.001, "homogeneity p-value {p_value}");
}

fn set_law(d: &CategoricalDist, k: usize) -> HashMap<Vec<usize>, f64> {
    combinations(d.len(), k)
        .into_iter()
        .map(|s| {
            let lp = log_p_set_exact(d, &s, &[]).unwrap();
            (s, lp.exp())
        })
        .collect()
}

fn beam_sets(fd: &FactorizedDist, k: usize, seed: u64) -> HashMap<Vec<usize>, usize> {
    let mut rng = seeded_rng(seed);
    count((0..DRAWS).map(|_| stochastic_beam_search(&mut rng, fd, k).unwrap().0.to_unordered().indices().to_vec()))
}

#[test]
fn beam_search_matches_flat_sets() {
    let fd = FactorizedDist::from_logits(vec![vec![0.4, -0.3], vec![1.1, 0.0]]).unwrap();
    let flat = fd.flatten(64).unwrap();
    let counts = beam_sets(&fd, 2, 15);
    let law = set_law(&flat, 2);
    assert!(total_variation(&counts, &law) < 0.01);
    assert!(chi_square_p(&counts, &law) > 0.001);
}

#[test]
fn beam_search_one_dimension_is_top_k() {
    let logits = vec![0.5, -1.0, 0.2, 1.3, 0.0];
    let fd = FactorizedDist::from_logits(vec![logits.clone()]).unwrap();
    let d = CategoricalDist::from_logits(logits).unwrap();
    let law: HashMap<Vec<usize>, f64> =
        permutations(&[0, 1, 2, 3, 4], 2).into_iter().map(|o| (o.clone(), ordered_prob(&d.probs(), &o))).collect();
    let mut rng = seeded_rng(16);
    let counts = count((0..DRAWS).map(|_| stochastic_beam_search(&mut rng, &fd, 2).unwrap().0.indices().to_vec()));
    assert!(total_variation(&counts, &law) < 0.01);
    assert!(chi_square_p(&counts, &law) > 0.001);
}

#[test]
fn beam_search_larger_domains() {
    let shapes: Vec<(Vec<Vec<f64>>, usize)> = vec![
        (vec![vec![0.2, -0.5, 1.0], vec![0.0, 0.7]], 3),
        (vec![vec![0.3, 0.0, -0.4, 0.9], vec![1.0, -1.0, 0.2, 0.0], vec![-0.2, 0.5, 0.0, 0.1]], 2),
    ];
    for (i, (logits, k)) in shapes.into_iter().enumerate() {
        let fd = FactorizedDist::from_logits(logits).unwrap();
        let flat = fd.flatten(64).unwrap();
        let counts = beam_sets(&fd, k, 100 + i as u64);
        let law = set_law(&flat, k);
        let p = chi_square_p(&counts, &law);
        assert!(p > 0.001, "shape {i}: p-value {p}");
    }
}
