//! Built-in families used by the test suites and the shipped configuration.

use alloc::vec;
use alloc::vec::Vec;

use crate::ambiguity::{AmbiguityFamily, DiscreteDistribution, LatticeSpec};

fn dist(pairs: &[(f64, f64)]) -> DiscreteDistribution {
    DiscreteDistribution::new(pairs)
}

/// `(name, family)` pairs. Every family has at most three members with at
/// most three atoms each.
pub fn families() -> Vec<(&'static str, AmbiguityFamily)> {
    let z = LatticeSpec::integers();
    vec![
        ("point", AmbiguityFamily::point_masses(&[2.0])),
        ("fair_coin", AmbiguityFamily::new(z, vec![dist(&[(-1.0, 0.5), (1.0, 0.5)])])),
        ("plus_minus_one", AmbiguityFamily::point_masses(&[-1.0, 1.0])),
        ("zero_one", AmbiguityFamily::point_masses(&[0.0, 1.0])),
        (
            "two_coins",
            AmbiguityFamily::new(
                z,
                vec![dist(&[(0.0, 0.5), (2.0, 0.5)]), dist(&[(0.0, 0.25), (2.0, 0.75)])],
            ),
        ),
        (
            "coin_or_one",
            AmbiguityFamily::new(
                z,
                vec![dist(&[(-1.0, 0.5), (1.0, 0.5)]), dist(&[(1.0, 1.0)])],
            ),
        ),
        (
            "skewed_three",
            AmbiguityFamily::new(
                z,
                vec![
                    dist(&[(-1.0, 0.5), (0.0, 0.25), (2.0, 0.25)]),
                    dist(&[(-1.0, 0.2), (0.0, 0.6), (2.0, 0.2)]),
                    dist(&[(0.0, 0.5), (2.0, 0.5)]),
                ],
            ),
        ),
        (
            "half_lattice",
            AmbiguityFamily::new(
                LatticeSpec::new(-0.5, 0.5),
                vec![
                    dist(&[(-0.5, 0.3), (0.0, 0.4), (1.0, 0.3)]),
                    dist(&[(-0.5, 0.6), (0.5, 0.4)]),
                ],
            ),
        ),
    ]
}
