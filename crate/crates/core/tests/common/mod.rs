//! Test-only oracles. Nothing here calls into the backward recursion; the
//! oracles walk explicit atom paths.
#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use sublin_core::ambiguity::{AmbiguityFamily, DiscreteDistribution, LatticeSpec};

/// Reachable lattice indices (relative to the lattice origin) per step,
/// computed from the raw atoms.
pub fn reachable_indices(f: &AmbiguityFamily, n: usize) -> Vec<Vec<i64>> {
    let idx: Vec<i64> = f
        .members
        .iter()
        .flat_map(|m| m.atoms.iter())
        .map(|a| ((a.value - f.lattice.origin) / f.lattice.step).round() as i64)
        .collect();
    let mut out = vec![vec![0i64]];
    for _ in 0..n {
        let mut next: Vec<i64> = out
            .last()
            .unwrap()
            .iter()
            .flat_map(|s| idx.iter().map(move |a| s + a))
            .collect();
        next.sort_unstable();
        next.dedup();
        out.push(next);
    }
    out
}

fn sum_key(f: &AmbiguityFamily, k: usize, sum: f64) -> i64 {
    ((sum - k as f64 * f.lattice.origin) / f.lattice.step).round() as i64
}

/// `E[φ(S_n/n)]` when member `choose(k, S_k)` draws `X_{k+1}`, by walking
/// every atom path.
pub fn path_expectation<C, F>(f: &AmbiguityFamily, n: usize, phi: &F, choose: &C) -> f64
where
    C: Fn(usize, f64, &[f64]) -> usize,
    F: Fn(f64) -> f64,
{
    fn walk<C, F>(
        f: &AmbiguityFamily,
        n: usize,
        phi: &F,
        choose: &C,
        hist: &mut Vec<f64>,
        prob: f64,
    ) -> f64
    where
        C: Fn(usize, f64, &[f64]) -> usize,
        F: Fn(f64) -> f64,
    {
        let k = hist.len();
        let sum: f64 = hist.iter().sum();
        if k == n {
            return prob * phi(sum / n as f64);
        }
        let m = &f.members[choose(k, sum, hist)];
        let mut acc = 0.0;
        for a in &m.atoms {
            hist.push(a.value);
            acc += walk(f, n, phi, choose, hist, prob * a.weight);
            hist.pop();
        }
        acc
    }
    walk(f, n, phi, choose, &mut Vec::new(), 1.0)
}

/// Number of deterministic sum-state policies for horizon `n`.
pub fn sum_policy_count(f: &AmbiguityFamily, n: usize) -> f64 {
    let states: usize = reachable_indices(f, n)[..n].iter().map(Vec::len).sum();
    (f.len() as f64).powi(states as i32)
}

/// Max of `E[φ(S_n/n)]` over every deterministic policy of the running sum,
/// enumerated one assignment at a time.
pub fn max_over_sum_policies<F: Fn(f64) -> f64>(f: &AmbiguityFamily, n: usize, phi: &F) -> f64 {
    let reach = reachable_indices(f, n);
    let states: Vec<(usize, i64)> = (0..n)
        .flat_map(|k| reach[k].iter().map(move |&s| (k, s)))
        .collect();
    let m = f.len();
    let total = m.pow(states.len() as u32);
    let mut best = f64::NEG_INFINITY;
    for code in 0..total {
        let mut table = BTreeMap::new();
        let mut c = code;
        for st in &states {
            table.insert(*st, c % m);
            c /= m;
        }
        let choose = |k: usize, sum: f64, _: &[f64]| table[&(k, sum_key(f, k, sum))];
        best = best.max(path_expectation(f, n, phi, &choose));
    }
    best
}

/// Max of `E[φ(x_1, …, x_n)]` over every deterministic policy of the full
/// history. Choices at different history nodes do not interact, so trying
/// every member at every node and keeping the best covers all policies.
pub fn max_over_history_policies<F: Fn(&[f64]) -> f64>(
    f: &AmbiguityFamily,
    n: usize,
    phi: &F,
) -> f64 {
    fn node<F: Fn(&[f64]) -> f64>(
        f: &AmbiguityFamily,
        n: usize,
        phi: &F,
        hist: &mut Vec<f64>,
    ) -> f64 {
        if hist.len() == n {
            return phi(hist);
        }
        let mut best = f64::NEG_INFINITY;
        for m in &f.members {
            let mut acc = 0.0;
            for a in &m.atoms {
                hist.push(a.value);
                acc += a.weight * node(f, n, phi, hist);
                hist.pop();
            }
            best = best.max(acc);
        }
        best
    }
    node(f, n, phi, &mut Vec::new())
}

/// Random small families: up to three members, up to three atoms each, on a
/// lattice with step 0.5 or 1.
pub fn family_strategy() -> impl Strategy<Value = AmbiguityFamily> {
    let lattice = (prop_oneof![Just(0.5), Just(1.0)], -2i32..=1);
    let member = proptest::collection::btree_set(-2i64..=3, 1..=3).prop_flat_map(|idx| {
        let k = idx.len();
        (Just(idx), proptest::collection::vec(0.05f64..1.0, k))
    });
    (lattice, proptest::collection::vec(member, 1..=3)).prop_map(|((step, o), members)| {
        let origin = o as f64 * step;
        let lattice = LatticeSpec::new(origin, step);
        let members = members
            .into_iter()
            .map(|(idx, raw)| {
                let total: f64 = raw.iter().sum();
                let pairs: Vec<(f64, f64)> = idx
                    .iter()
                    .zip(&raw)
                    .map(|(&i, &r)| (lattice.point(i), r / total))
                    .collect();
                DiscreteDistribution::new(&pairs)
            })
            .collect();
        AmbiguityFamily::new(lattice, members)
    })
}

/// Test functions applied to `S_n/n` in the oracle comparisons.
pub type TestFn = fn(f64) -> f64;

pub fn test_functions() -> Vec<(&'static str, TestFn)> {
    vec![
        ("x", |x| x),
        ("abs", |x| x.abs()),
        ("neg_abs_0.3", |x| -(x - 0.3).abs()),
        ("square", |x| x * x),
        ("cubic", |x| x * x * x - x),
        ("sin", |x| (7.0 * x).sin()),
        ("step", |x| if x > 0.25 { 1.0 } else { -0.5 }),
    ]
}
