#![allow(dead_code)]

use capcount::{DeterminantalSpec, MatroidSpec, PolynomialOracle, ProductSpec};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Connected simple graph with `vertices` vertices and `edges` edges.
pub fn random_graphic(rng: &mut ChaCha8Rng, vertices: usize, edges: usize) -> MatroidSpec {
    let mut all: Vec<(usize, usize)> = (0..vertices).flat_map(|a| (a + 1..vertices).map(move |b| (a, b))).collect();
    assert!(edges >= vertices - 1 && edges <= all.len());
    let mut order: Vec<usize> = (0..vertices).collect();
    order.shuffle(rng);
    let mut chosen = Vec::new();
    for k in 1..vertices {
        let parent = order[rng.random_range(0..k)];
        let (a, b) = (parent.min(order[k]), parent.max(order[k]));
        chosen.push((a, b));
    }
    all.retain(|e| !chosen.contains(e));
    all.shuffle(rng);
    chosen.extend(all.into_iter().take(edges + 1 - vertices));
    MatroidSpec::graphic(vertices, chosen).unwrap()
}

/// Graphic matroid with at most `max_m` edges.
pub fn any_graphic(rng: &mut ChaCha8Rng, max_m: usize) -> MatroidSpec {
    loop {
        let v = rng.random_range(3..=5);
        let full = v * (v - 1) / 2;
        let lo = v; // at least one cycle
        let hi = full.min(max_m);
        if lo <= hi {
            let e = rng.random_range(lo..=hi);
            return random_graphic(rng, v, e);
        }
    }
}

pub fn random_partition(rng: &mut ChaCha8Rng, min_m: usize, max_m: usize) -> MatroidSpec {
    let m = rng.random_range(min_m..=max_m);
    let k = rng.random_range(1..=3.min(m));
    let mut elems: Vec<usize> = (0..m).collect();
    elems.shuffle(rng);
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, e) in elems.into_iter().enumerate() {
        let j = if i < k { i } else { rng.random_range(0..k) };
        parts[j].push(e);
    }
    let quotas = parts.iter().map(|p| rng.random_range(1..=p.len())).collect();
    MatroidSpec::partition(m, parts, quotas).unwrap()
}

pub fn random_uniform(rng: &mut ChaCha8Rng, min_m: usize, max_m: usize) -> MatroidSpec {
    let m = rng.random_range(min_m..=max_m);
    let n = rng.random_range(1..m);
    MatroidSpec::uniform(m, n).unwrap()
}

pub fn random_product(rng: &mut ChaCha8Rng, n: usize, m: usize) -> PolynomialOracle {
    let a = DMatrix::from_fn(n, m, |_, _| rng.random_range(0.1..2.0));
    PolynomialOracle::linear_product(ProductSpec::new(a).unwrap())
}

pub fn random_determinantal(rng: &mut ChaCha8Rng, n: usize, m: usize) -> PolynomialOracle {
    let v = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    PolynomialOracle::determinantal(DeterminantalSpec::new(v).unwrap())
}

pub fn random_psd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(m, m + 1, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose()
}
