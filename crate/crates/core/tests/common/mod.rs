#![allow(dead_code)]

use std::collections::BTreeMap;

use edgelab::{ChainSpec, Complex64, PinSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random elliptic chain with per-step state counts in `1..=max_states`.
pub fn random_chain(seed: u64, n: usize, max_states: usize, bound: i64) -> ChainSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=max_states)).collect();
    let law = |rng: &mut ChaCha8Rng, k: usize| {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let initial = law(&mut rng, sizes[0]);
    let kernels = (0..n - 1)
        .map(|i| (0..sizes[i]).map(|_| law(&mut rng, sizes[i + 1])).collect())
        .collect();
    let values = sizes
        .iter()
        .map(|&k| (0..k).map(|_| rng.gen_range(-bound..=bound)).collect())
        .collect();
    ChainSpec::new(initial, kernels, values, bound).unwrap()
}

/// Every path with its probability and sum.
pub fn paths(spec: &ChainSpec) -> Vec<(Vec<usize>, f64, i64)> {
    let mut out = Vec::new();
    let mut path = Vec::new();
    fn rec(spec: &ChainSpec, path: &mut Vec<usize>, p: f64, s: i64, out: &mut Vec<(Vec<usize>, f64, i64)>) {
        let n = path.len();
        if n == spec.horizon() {
            out.push((path.clone(), p, s));
            return;
        }
        for x in 0..spec.states(n + 1) {
            let q = if n == 0 {
                spec.initial()[x]
            } else {
                spec.kernel(n).get(path[n - 1], x)
            };
            path.push(x);
            rec(spec, path, p * q, s + spec.values(n + 1)[x], out);
            path.pop();
        }
    }
    rec(spec, &mut path, 1.0, 0, &mut out);
    out
}

fn pinned(path: &[usize], pins: Option<&PinSet>) -> bool {
    pins.is_none_or(|ps| ps.iter().all(|(step, state)| path[step - 1] == state))
}

/// `P(pins)` by enumeration.
pub fn brute_pin_probability(spec: &ChainSpec, pins: &PinSet) -> f64 {
    paths(spec)
        .iter()
        .filter(|(x, _, _)| pinned(x, Some(pins)))
        .map(|(_, p, _)| p)
        .sum()
}

/// Law of `S_N`, conditional on the pins if given.
pub fn brute_pmf(spec: &ChainSpec, pins: Option<&PinSet>) -> BTreeMap<i64, f64> {
    let mut m = BTreeMap::new();
    let mut total = 0.0;
    for (x, p, s) in paths(spec) {
        if pinned(&x, pins) {
            *m.entry(s).or_insert(0.0) += p;
            total += p;
        }
    }
    for v in m.values_mut() {
        *v /= total;
    }
    m
}

pub fn brute_char_fn(spec: &ChainSpec, t: f64, pins: Option<&PinSet>) -> Complex64 {
    brute_pmf(spec, pins)
        .iter()
        .map(|(&k, &p)| Complex64::from_polar(p, t * k as f64))
        .sum()
}

/// `sup_k |a(k) - b(k)|` over the union of supports.
pub fn sup_diff(a: &BTreeMap<i64, f64>, b: &edgelab::SumPmf) -> f64 {
    let (lo, hi) = b.support();
    let lo = lo.min(*a.keys().next().unwrap());
    let hi = hi.max(*a.keys().last().unwrap());
    (lo..=hi)
        .map(|k| (a.get(&k).copied().unwrap_or(0.0) - b.prob(k)).abs())
        .fold(0.0, f64::max)
}

/// Random pin set with `count` distinct steps.
pub fn random_pins(spec: &ChainSpec, seed: u64, count: usize) -> PinSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pins = PinSet::new();
    while pins.len() < count.min(spec.horizon()) {
        let step = rng.gen_range(1..=spec.horizon());
        if pins.state_at(step).is_none() {
            pins.insert(step, rng.gen_range(0..spec.states(step)));
        }
    }
    pins
}
