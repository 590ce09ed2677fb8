mod common;

use common::*;
use proptest::prelude::*;
use sublin_core::corpus;
use sublin_core::engine::*;
use sublin_core::ambiguity::{one_step_expectation, AmbiguityFamily};
use sublin_core::measures::{measure_corpus, MeasureOptions};

const POLICY_ENUM_LIMIT: f64 = 200_000.0;

fn opts() -> EngineOptions {
    EngineOptions::default()
}

#[test]
fn dp_matches_policy_enumeration_on_corpus() {
    for (name, f) in corpus::families() {
        for n in 1..=4 {
            for (fname, phi) in test_functions() {
                let dp = iid_sum_expectation(&f, n, phi, &opts()).unwrap();
                let hist = max_over_history_policies(&f, n, &|xs: &[f64]| {
                    phi(xs.iter().sum::<f64>() / n as f64)
                });
                assert!(
                    (dp - hist).abs() <= 1e-12,
                    "{name} n={n} {fname}: dp {dp} vs history {hist}"
                );
                if sum_policy_count(&f, n) <= POLICY_ENUM_LIMIT {
                    let sum = max_over_sum_policies(&f, n, &phi);
                    assert!(
                        (dp - sum).abs() <= 1e-12,
                        "{name} n={n} {fname}: dp {dp} vs sum policies {sum}"
                    );
                }
            }
        }
    }
}

#[test]
fn oracle_examples_from_enumeration() {
    let zo = AmbiguityFamily::point_masses(&[0.0, 1.0]);
    let phi = |x: f64| -(x - 1.0 / 3.0).abs();
    assert!(max_over_sum_policies(&zo, 3, &phi).abs() < 1e-15);
    let pm = AmbiguityFamily::point_masses(&[-1.0, 1.0]);
    assert_eq!(max_over_sum_policies(&pm, 2, &|x: f64| -x.abs()), 0.0);
    assert_eq!(-max_over_sum_policies(&pm, 2, &|x: f64| -x.abs()), 0.0);
}

#[test]
fn bruteforce_equals_dp_for_sum_functionals() {
    for (name, f) in corpus::families() {
        for n in 1..=5 {
            for (fname, phi) in test_functions() {
                let dp = iid_sum_expectation(&f, n, phi, &opts()).unwrap();
                let bf = joint_expectation_bruteforce(
                    &f,
                    n,
                    |xs| phi(xs.iter().sum::<f64>() / n as f64),
                    &opts(),
                )
                .unwrap();
                assert!((dp - bf).abs() <= 1e-12, "{name} n={n} {fname}: {dp} vs {bf}");
            }
        }
    }
}

#[test]
fn bruteforce_handles_non_sum_functionals() {
    for (name, f) in corpus::families() {
        for n in 2..=4 {
            let phi = |xs: &[f64]| xs[0] * xs[n - 1] - (xs[1] - 0.5).abs();
            let bf = joint_expectation_bruteforce(&f, n, phi, &opts()).unwrap();
            let oracle = max_over_history_policies(&f, n, &phi);
            assert!((bf - oracle).abs() <= 1e-12, "{name} n={n}");
        }
    }
}

#[test]
fn argmax_policy_attains_and_measures_are_dominated() {
    let mopts = MeasureOptions::default();
    for (name, f) in corpus::families() {
        for n in [1, 2, 5, 16, 64] {
            for (fname, phi) in test_functions() {
                let v = iid_sum_expectation(&f, n, phi, &opts()).unwrap();
                let p = extract_argmax_policy(&f, n, phi, &opts()).unwrap();
                let e = expectation_under_policy(&f, n, phi, &p, &opts()).unwrap();
                assert!((e - v).abs() <= 1e-10, "{name} n={n} {fname}: {e} vs {v}");
                let lower = lower_iid_sum_expectation(&f, n, phi, &opts()).unwrap();
                assert!(lower <= v + 1e-12);
                if n <= 5 {
                    for m in measure_corpus(&f, n, &opts()).unwrap() {
                        let em = m.expectation(&f, n, phi, &mopts).unwrap();
                        assert!(em <= v + 1e-12, "{name} {} n={n} {fname}", m.name());
                        assert!(em >= lower - 1e-12, "{name} {} n={n} {fname}", m.name());
                    }
                }
            }
        }
    }
}

#[test]
fn argmax_policy_matches_path_oracle() {
    for (name, f) in corpus::families() {
        for n in 1..=5 {
            let phi = |x: f64| (x - 0.2).abs();
            let p = extract_argmax_policy(&f, n, phi, &opts()).unwrap();
            let oracle = path_expectation(&f, n, &phi, &|k, s, _: &[f64]| {
                p.select(k, s).unwrap()
            });
            let v = iid_sum_expectation(&f, n, phi, &opts()).unwrap();
            assert!((oracle - v).abs() <= 1e-12, "{name} n={n}");
        }
    }
}

#[test]
fn support_matches_independent_enumeration() {
    for (name, f) in corpus::families() {
        let n = 6;
        let s = SumSupport::build(&f, n, &opts()).unwrap();
        let reach = reachable_indices(&f, n);
        let (lo, hi) = f.atom_range();
        let span = (hi - lo) / f.lattice.step;
        for k in 0..=n {
            let sums = s.sums(k);
            let want: Vec<f64> = reach[k]
                .iter()
                .map(|&i| k as f64 * f.lattice.origin + i as f64 * f.lattice.step)
                .collect();
            assert_eq!(sums.len(), want.len(), "{name} k={k}");
            for (a, b) in sums.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{name} k={k}");
            }
            assert!(sums.len() as f64 <= 1.0 + k as f64 * span + 1e-9);
        }
        assert_eq!(s.sums(0), vec![0.0]);
    }
}

fn sum_of(xs: &[f64]) -> f64 {
    xs.iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_families_match_history_oracle(f in family_strategy(), n in 1usize..=3, c in -1.0f64..1.0) {
        let phi = move |x: f64| (x - c).abs() - 0.5 * (x * x);
        let dp = iid_sum_expectation(&f, n, phi, &opts()).unwrap();
        let oracle = max_over_history_policies(&f, n, &|xs: &[f64]| phi(sum_of(xs) / n as f64));
        prop_assert!((dp - oracle).abs() <= 1e-12, "{} vs {}", dp, oracle);
    }

    #[test]
    fn engine_is_sublinear_in_phi(
        f in family_strategy(),
        n in 1usize..=12,
        a in -2.0f64..2.0, b in -2.0f64..2.0,
        lambda in 0.0f64..5.0, c in -3.0f64..3.0,
    ) {
        let psi = move |x: f64| (a * x).sin() + x;
        let chi = move |x: f64| (x - b).abs();
        let e = |g: &dyn Fn(f64) -> f64| iid_sum_expectation(&f, n, g, &opts()).unwrap();
        let ep = e(&psi);
        let ec = e(&chi);
        // sub-additivity
        prop_assert!(e(&|x| psi(x) + chi(x)) <= ep + ec + 1e-12);
        // positive homogeneity
        prop_assert!((e(&|x| lambda * psi(x)) - lambda * ep).abs() <= 1e-12 * (1.0 + lambda * ep.abs()));
        // constant preserving
        prop_assert!((e(&|_| c) - c).abs() <= 1e-12);
        // monotonicity: psi - |chi| <= psi
        prop_assert!(e(&|x| psi(x) - chi(x).abs()) <= ep + 1e-12);
        // range over the terminal support
        let s = SumSupport::build(&f, n, &opts()).unwrap();
        let vals: Vec<f64> = s.sums(n).iter().map(|&x| psi(x / n as f64)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(ep >= lo - 1e-12 && ep <= hi + 1e-12);
    }

    #[test]
    fn one_step_consistency(f in family_strategy(), c in -2.0f64..2.0) {
        let phi = move |x: f64| (x - c).abs() * x;
        let a = iid_sum_expectation(&f, 1, phi, &opts()).unwrap();
        let b = one_step_expectation(&f, phi).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }
}
