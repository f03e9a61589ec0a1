//! Fixtures shared by the benchmarks.

use rand::Rng;
use sworgrad::sampling::seeded_rng;
use sworgrad::{CategoricalDist, Objective};

/// Distribution with logits uniform on `[-3, 3]`.
pub fn random_dist(n: usize, seed: u64) -> CategoricalDist {
    let mut rng = seeded_rng(seed);
    CategoricalDist::from_logits((0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).expect("finite logits")
}

pub fn random_objective(n: usize, seed: u64) -> Objective {
    let mut rng = seeded_rng(seed ^ 0x9e37_79b9);
    Objective::new((0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).expect("finite values")
}

/// The first `k` elements, as a sorted set.
pub fn first_k(k: usize) -> Vec<usize> {
    (0..k).collect()
}
