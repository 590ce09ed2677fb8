//! The law-of-large-numbers limit and its convergence-rate bounds.
//!
//! For an i.i.d. sequence with upper and lower means `μ̄`, `μ̲`,
//! `Ê[φ(S_n/n)] → max_{r ∈ [μ̲, μ̄]} φ(r)`. This module computes that limit
//! with a certified error, the three closed-form rate bounds, and per-`n`
//! reports comparing them with the exact engine value.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::ambiguity::{moment_summary, AmbiguityFamily, FamilyError, MomentSummary};
use crate::engine::{iid_sum_expectation, EngineError, EngineOptions};
use crate::numeric::{ceil, powf, sqrt};

/// Absolute slack allowed when comparing a gap against a bound.
pub const BOUND_TOL: f64 = 1e-9;

/// Relative grid accuracy targeted by [`interval_max`].
const GRID_REL_ACCURACY: f64 = 1e-9;

/// Largest grid used by [`interval_max`].
pub const MAX_GRID_POINTS: usize = 1_000_001;

#[derive(Debug, Clone, PartialEq)]
pub enum RateError {
    AlphaOutOfRange { alpha: f64 },
    NonPositiveN,
    InvalidInterval { lower: f64, upper: f64 },
    NegativeInput { name: &'static str, value: f64 },
    NonAscendingSchedule,
    Family(FamilyError),
    Engine(EngineError),
}

impl From<FamilyError> for RateError {
    fn from(e: FamilyError) -> Self {
        RateError::Family(e)
    }
}

impl From<EngineError> for RateError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Family(f) => RateError::Family(f),
            other => RateError::Engine(other),
        }
    }
}

impl fmt::Display for RateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateError::AlphaOutOfRange { alpha } => {
                write!(f, "alpha must lie in (0, 1], got {alpha}")
            }
            RateError::NonPositiveN => write!(f, "n must be at least 1"),
            RateError::InvalidInterval { lower, upper } => {
                write!(f, "empty interval [{lower}, {upper}]")
            }
            RateError::NegativeInput { name, value } => {
                write!(f, "{name} must be nonnegative, got {value}")
            }
            RateError::NonAscendingSchedule => {
                write!(f, "n schedule must be nonempty, positive and strictly ascending")
            }
            RateError::Family(e) => write!(f, "invalid family: {e}"),
            RateError::Engine(e) => e.fmt(f),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for RateError {}

/// A test function together with a sound Lipschitz constant.
#[derive(Clone)]
pub struct LipschitzFunction {
    name: String,
    lipschitz: f64,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Points where the maximum may sit off-grid (kinks, vertices); always
    /// evaluated by [`interval_max`] when inside the interval.
    critical_points: Vec<f64>,
}

impl fmt::Debug for LipschitzFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzFunction")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .field("critical_points", &self.critical_points)
            .finish_non_exhaustive()
    }
}

impl LipschitzFunction {
    /// Wraps an arbitrary evaluator. The caller vouches for `lipschitz`;
    /// [`LipschitzFunction::spot_check`] can test it.
    pub fn new<F>(name: impl Into<String>, lipschitz: f64, eval: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        LipschitzFunction {
            name: name.into(),
            lipschitz,
            eval: Arc::new(eval),
            critical_points: Vec::new(),
        }
    }

    pub fn with_critical_points(mut self, points: &[f64]) -> Self {
        self.critical_points.extend_from_slice(points);
        self
    }

    /// `a·x + b`, `L = |a|`.
    pub fn linear(a: f64, b: f64) -> Self {
        LipschitzFunction::new(alloc::format!("linear({a},{b})"), a.abs(), move |x| a * x + b)
    }

    /// `|x − c|`, `L = 1`.
    pub fn abs_dev(c: f64) -> Self {
        LipschitzFunction::new(alloc::format!("abs_dev({c})"), 1.0, move |x| (x - c).abs())
            .with_critical_points(&[c])
    }

    /// `−|x − c|`, `L = 1`.
    pub fn neg_abs_dev(c: f64) -> Self {
        LipschitzFunction::new(alloc::format!("neg_abs_dev({c})"), 1.0, move |x| {
            -(x - c).abs()
        })
        .with_critical_points(&[c])
    }

    /// `min(max(x, lo), hi)`, `L = 1`.
    pub fn clip(lo: f64, hi: f64) -> Self {
        LipschitzFunction::new(alloc::format!("clip({lo},{hi})"), 1.0, move |x| {
            x.max(lo).min(hi)
        })
        .with_critical_points(&[lo, hi])
    }

    /// `d²(x, [lo, hi])` with the Lipschitz constant it has on
    /// `[support_lo, support_hi]`: `2·max(|support_lo − hi|, |support_hi − lo|)`.
    pub fn dist_sq_interval(lo: f64, hi: f64, support_lo: f64, support_hi: f64) -> Self {
        let lipschitz = 2.0 * (support_lo - hi).abs().max((support_hi - lo).abs());
        LipschitzFunction::new(
            alloc::format!("dist_sq([{lo},{hi}])"),
            lipschitz,
            move |x| dist_sq_to_interval(x, lo, hi),
        )
        .with_critical_points(&[lo, hi])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn critical_points(&self) -> &[f64] {
        &self.critical_points
    }

    /// Samples `pairs` random pairs in `[lo, hi]` and returns the first pair
    /// violating `|φ(x) − φ(y)| ≤ L·|x − y|` (relative slack `1e-9`).
    pub fn spot_check(&self, lo: f64, hi: f64, pairs: usize, seed: u64) -> Option<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = hi - lo;
        for _ in 0..pairs {
            let x = lo + width * unit_f64(&mut rng);
            let y = lo + width * unit_f64(&mut rng);
            let lhs = (self.eval(x) - self.eval(y)).abs();
            let rhs = self.lipschitz * (x - y).abs();
            if lhs > rhs * (1.0 + 1e-9) + 1e-15 {
                return Some((x, y));
            }
        }
        None
    }
}

/// Uniform draw in `[0, 1)` from the top 53 bits of one `u64`.
pub(crate) fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Squared distance from `x` to `[lo, hi]`.
pub fn dist_sq_to_interval(x: f64, lo: f64, hi: f64) -> f64 {
    let d = if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        0.0
    };
    d * d
}

/// Location and value of `max_{r ∈ [lower, upper]} φ(r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalMaxResult {
    pub argmax_r: f64,
    pub max_value: f64,
    /// The true maximum lies in `[max_value, max_value + grid_error_bound]`.
    pub grid_error_bound: f64,
}

/// Certified grid maximisation of a Lipschitz function on an interval.
pub fn interval_max(
    phi: &LipschitzFunction,
    lower: f64,
    upper: f64,
) -> Result<IntervalMaxResult, RateError> {
    if !(lower <= upper) {
        return Err(RateError::InvalidInterval { lower, upper });
    }
    if lower == upper {
        return Ok(IntervalMaxResult {
            argmax_r: lower,
            max_value: phi.eval(lower),
            grid_error_bound: 0.0,
        });
    }
    let width = upper - lower;
    let l = phi.lipschitz();
    let points = if l > 0.0 {
        let h = 2.0 * GRID_REL_ACCURACY * (l * width).max(1.0) / l;
        let wanted = ceil(width / h) + 1.0;
        if wanted >= MAX_GRID_POINTS as f64 {
            MAX_GRID_POINTS
        } else {
            (wanted as usize).max(2)
        }
    } else {
        2
    };
    let h = width / (points - 1) as f64;
    let mut best_r = lower;
    let mut best = phi.eval(lower);
    for i in 1..points {
        let r = if i == points - 1 {
            upper
        } else {
            lower + i as f64 * h
        };
        let v = phi.eval(r);
        if v > best {
            best = v;
            best_r = r;
        }
    }
    for &c in phi.critical_points() {
        if c >= lower && c <= upper {
            let v = phi.eval(c);
            if v > best {
                best = v;
                best_r = c;
            }
        }
    }
    Ok(IntervalMaxResult {
        argmax_r: best_r,
        max_value: best,
        grid_error_bound: if l > 0.0 { l * h / 2.0 } else { 0.0 },
    })
}

fn check_n(n: usize) -> Result<f64, RateError> {
    if n == 0 {
        Err(RateError::NonPositiveN)
    } else {
        Ok(n as f64)
    }
}

fn check_nonneg(name: &'static str, value: f64) -> Result<f64, RateError> {
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(RateError::NegativeInput { name, value })
    }
}

/// `L·(4·C_α / n^α)^{1/(1+α)}`.
pub fn theorem3_bound(
    lipschitz: f64,
    c_alpha: f64,
    alpha: f64,
    n: usize,
) -> Result<f64, RateError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RateError::AlphaOutOfRange { alpha });
    }
    let n = check_n(n)?;
    check_nonneg("lipschitz", lipschitz)?;
    check_nonneg("c_alpha", c_alpha)?;
    Ok(lipschitz * powf(4.0 * c_alpha / powf(n, alpha), 1.0 / (1.0 + alpha)))
}

/// `σ̄ / √n`.
pub fn corollary_bound(sigma_bar: f64, n: usize) -> Result<f64, RateError> {
    let n = check_n(n)?;
    Ok(check_nonneg("sigma_bar", sigma_bar)? / sqrt(n))
}

/// `2·(σ̄² + spread²) / n`, the earlier bound on the squared distance moment.
pub fn fang_bound(sigma_bar_sq: f64, mu_spread: f64, n: usize) -> Result<f64, RateError> {
    let n = check_n(n)?;
    let s = check_nonneg("sigma_bar_sq", sigma_bar_sq)?;
    let d = check_nonneg("mu_spread", mu_spread)?;
    Ok(2.0 * (s + d * d) / n)
}

/// `σ̄² / n`, the sharper bound on `Ê[d²_{[μ̲,μ̄]}(S_n/n)]`.
pub fn improved_distance_bound(sigma_bar_sq: f64, n: usize) -> Result<f64, RateError> {
    let n = check_n(n)?;
    Ok(check_nonneg("sigma_bar_sq", sigma_bar_sq)? / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceMoment {
    /// `Ê[d²_{[μ̲,μ̄]}(S_n/n)]`.
    pub value: f64,
    /// Lipschitz constant of `d²` on the atom range.
    pub lipschitz: f64,
}

/// `Ê[d²_{[μ̲,μ̄]}(S_n/n)]` through the engine.
pub fn distance_sq_moment(
    f: &AmbiguityFamily,
    n: usize,
    opts: &EngineOptions,
) -> Result<DistanceMoment, RateError> {
    let (lo, hi) = crate::ambiguity::mean_bounds(f)?;
    let (a_min, a_max) = f.atom_range();
    let value = iid_sum_expectation(f, n, |x| dist_sq_to_interval(x, lo, hi), opts)?;
    Ok(DistanceMoment {
        value,
        lipschitz: 2.0 * (a_min - hi).abs().max((a_max - lo).abs()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub bound: f64,
    pub holds: bool,
}

impl BoundCheck {
    pub fn new(gap: f64, bound: f64) -> Self {
        BoundCheck {
            bound,
            holds: gap <= bound + BOUND_TOL,
        }
    }
}

/// One row of a rate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub n: usize,
    /// `Ê[φ(S_n/n)]`.
    pub expectation: f64,
    /// `max_{[μ̲, μ̄]} φ` (grid value).
    pub limit: f64,
    pub limit_error: f64,
    /// `|expectation − limit|`.
    pub gap: f64,
    /// `(α, check)` in the requested α order.
    pub theorem3: Vec<(f64, BoundCheck)>,
    /// Present when `L_φ ≤ 1`.
    pub corollary: Option<BoundCheck>,
}

impl RateReport {
    pub fn bounds_hold(&self) -> bool {
        self.theorem3.iter().all(|(_, b)| b.holds) && self.corollary.is_none_or(|b| b.holds)
    }
}

/// Runs the engine at each `n` of the schedule and checks every bound.
pub fn rate_sweep(
    f: &AmbiguityFamily,
    phi: &LipschitzFunction,
    n_schedule: &[usize],
    alphas: &[f64],
    opts: &EngineOptions,
) -> Result<Vec<RateReport>, RateError> {
    if n_schedule.is_empty()
        || n_schedule[0] == 0
        || n_schedule.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(RateError::NonAscendingSchedule);
    }
    if let Some(&alpha) = alphas.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
        return Err(RateError::AlphaOutOfRange { alpha });
    }
    let summary = moment_summary(f, alphas)?;
    let limit = interval_max(phi, summary.mu_lower, summary.mu_upper)?;
    n_schedule
        .iter()
        .map(|&n| rate_report(f, phi, n, &summary, &limit, opts))
        .collect()
}

fn rate_report(
    f: &AmbiguityFamily,
    phi: &LipschitzFunction,
    n: usize,
    summary: &MomentSummary,
    limit: &IntervalMaxResult,
    opts: &EngineOptions,
) -> Result<RateReport, RateError> {
    let expectation = iid_sum_expectation(f, n, |x| phi.eval(x), opts)?;
    let gap = (expectation - limit.max_value).abs();
    let mut theorem3 = Vec::with_capacity(summary.c_alpha.len());
    for &(alpha, c) in &summary.c_alpha {
        let bound = theorem3_bound(phi.lipschitz(), c, alpha, n)?;
        theorem3.push((alpha, BoundCheck::new(gap, bound)));
    }
    let corollary = if phi.lipschitz() <= 1.0 {
        Some(BoundCheck::new(gap, corollary_bound(summary.sigma_bar(), n)?))
    } else {
        None
    };
    Ok(RateReport {
        n,
        expectation,
        limit: limit.max_value,
        limit_error: limit.grid_error_bound,
        gap,
        theorem3,
        corollary,
    })
}

/// The standard test functions for a family, with parameters placed
/// relative to its mean interval and atom range.
pub fn catalog_for(f: &AmbiguityFamily) -> Result<Vec<LipschitzFunction>, FamilyError> {
    let (lo, hi) = crate::ambiguity::mean_bounds(f)?;
    let (a_min, a_max) = f.atom_range();
    let mid = 0.5 * (lo + hi);
    Ok(alloc::vec![
        LipschitzFunction::linear(1.0, 0.0),
        LipschitzFunction::linear(-2.0, 1.0),
        LipschitzFunction::abs_dev(mid),
        LipschitzFunction::neg_abs_dev(mid),
        LipschitzFunction::neg_abs_dev(lo + 0.3 * (hi - lo)),
        LipschitzFunction::abs_dev(hi + 0.25),
        LipschitzFunction::clip(lo, mid),
        LipschitzFunction::dist_sq_interval(lo, hi, a_min, a_max),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::{DiscreteDistribution, LatticeSpec};
    use alloc::vec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-14
    }

    #[test]
    fn interval_max_examples() {
        let r = interval_max(&LipschitzFunction::neg_abs_dev(0.3), 0.0, 1.0).unwrap();
        assert_eq!((r.max_value, r.argmax_r), (0.0, 0.3));

        let r = interval_max(&LipschitzFunction::linear(1.0, 0.0), -1.0, 2.0).unwrap();
        assert_eq!((r.max_value, r.argmax_r), (2.0, 2.0));

        // vertex at 0.37; on [0,1] the function is 2-Lipschitz
        let q = LipschitzFunction::new("q", 2.0, |r| -(r - 0.37) * (r - 0.37));
        let r = interval_max(&q, 0.0, 1.0).unwrap();
        assert!(r.max_value <= 0.0 && -r.max_value <= r.grid_error_bound);
        assert!((r.argmax_r - 0.37).abs() <= 2e-6);
    }

    #[test]
    fn interval_max_degenerate_and_invalid() {
        let r = interval_max(&LipschitzFunction::abs_dev(1.0), 0.25, 0.25).unwrap();
        assert_eq!(r, IntervalMaxResult {
            argmax_r: 0.25,
            max_value: 0.75,
            grid_error_bound: 0.0
        });
        assert!(matches!(
            interval_max(&LipschitzFunction::abs_dev(1.0), 1.0, 0.0),
            Err(RateError::InvalidInterval { .. })
        ));
        let flat = LipschitzFunction::new("flat", 0.0, |_| 4.0);
        let r = interval_max(&flat, -3.0, 3.0).unwrap();
        assert_eq!((r.max_value, r.grid_error_bound), (4.0, 0.0));
    }

    #[test]
    fn theorem3_examples() {
        assert!(close(theorem3_bound(1.0, 1.0, 1.0, 4).unwrap(), 1.0));
        assert!(close(theorem3_bound(1.0, 1.0, 1.0, 100).unwrap(), 0.2));
        assert!(close(theorem3_bound(2.0, 1.0, 0.5, 16).unwrap(), 2.0));
        assert!(matches!(
            theorem3_bound(1.0, 1.0, 1.5, 4),
            Err(RateError::AlphaOutOfRange { .. })
        ));
        assert_eq!(theorem3_bound(1.0, 1.0, 1.0, 0), Err(RateError::NonPositiveN));
    }

    #[test]
    fn simple_bound_examples() {
        assert!(close(corollary_bound(1.0, 100).unwrap(), 0.1));
        assert_eq!(corollary_bound(0.0, 7).unwrap(), 0.0);
        assert_eq!(corollary_bound(1.0, 4).unwrap(), 0.5);
        assert_eq!(fang_bound(1.0, 0.0, 2).unwrap(), 1.0);
        assert_eq!(fang_bound(0.0, 1.0, 4).unwrap(), 0.5);
        assert_eq!(fang_bound(1.0, 2.0, 10).unwrap(), 1.0);
        assert_eq!(improved_distance_bound(1.0, 4).unwrap(), 0.25);
        assert!(close(improved_distance_bound(0.25, 25).unwrap(), 0.01));
        assert_eq!(improved_distance_bound(1.0, 1).unwrap(), 1.0);
        for r in [
            corollary_bound(1.0, 0),
            fang_bound(1.0, 1.0, 0),
            improved_distance_bound(1.0, 0),
        ] {
            assert_eq!(r, Err(RateError::NonPositiveN));
        }
    }

    #[test]
    fn distance_moment_examples() {
        let coin = AmbiguityFamily::new(
            LatticeSpec::integers(),
            vec![DiscreteDistribution::new(&[(-1.0, 0.5), (1.0, 0.5)])],
        );
        let o = EngineOptions::default();
        assert_eq!(distance_sq_moment(&coin, 4, &o).unwrap().value, 0.25);
        let point = AmbiguityFamily::point_masses(&[3.0]);
        for n in [1, 5, 40] {
            assert_eq!(distance_sq_moment(&point, n, &o).unwrap().value, 0.0);
        }
        let zo = AmbiguityFamily::point_masses(&[0.0, 1.0]);
        assert_eq!(distance_sq_moment(&zo, 2, &o).unwrap().value, 0.0);
        assert_eq!(distance_sq_moment(&zo, 2, &o).unwrap().lipschitz, 2.0);
    }

    #[test]
    fn sweep_examples() {
        let o = EngineOptions::default();
        let point = AmbiguityFamily::point_masses(&[0.0]);
        let rows = rate_sweep(
            &point,
            &LipschitzFunction::abs_dev(0.4),
            &[1, 3, 9],
            &[0.5, 1.0],
            &o,
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.gap == 0.0 && r.bounds_hold()));

        let coin = AmbiguityFamily::new(
            LatticeSpec::integers(),
            vec![DiscreteDistribution::new(&[(-1.0, 0.5), (1.0, 0.5)])],
        );
        let rows = rate_sweep(&coin, &LipschitzFunction::abs_dev(0.0), &[4], &[1.0], &o).unwrap();
        assert_eq!(rows[0].gap, 0.375);
        assert!(rows[0].corollary.is_some());

        let pm = AmbiguityFamily::point_masses(&[-1.0, 1.0]);
        let sched: Vec<usize> = (1..=64).collect();
        let rows = rate_sweep(&pm, &LipschitzFunction::neg_abs_dev(0.3), &sched, &[1.0], &o)
            .unwrap();
        assert!(rows.iter().all(RateReport::bounds_hold));
    }

    #[test]
    fn sweep_rejects_bad_schedule() {
        let o = EngineOptions::default();
        let f = AmbiguityFamily::point_masses(&[0.0]);
        let phi = LipschitzFunction::abs_dev(0.0);
        for s in [&[][..], &[0, 1][..], &[2, 2][..], &[4, 2][..]] {
            assert_eq!(
                rate_sweep(&f, &phi, s, &[1.0], &o),
                Err(RateError::NonAscendingSchedule)
            );
        }
        assert!(matches!(
            rate_sweep(&f, &phi, &[1], &[0.0], &o),
            Err(RateError::AlphaOutOfRange { .. })
        ));
    }

    #[test]
    fn catalog_constants_are_sound() {
        let f = AmbiguityFamily::new(
            LatticeSpec::integers(),
            vec![
                DiscreteDistribution::new(&[(-1.0, 0.5), (0.0, 0.25), (2.0, 0.25)]),
                DiscreteDistribution::new(&[(0.0, 0.5), (2.0, 0.5)]),
            ],
        );
        let (lo, hi) = f.atom_range();
        for phi in catalog_for(&f).unwrap() {
            assert_eq!(phi.spot_check(lo, hi, 10_000, 7), None, "{}", phi.name());
        }
        let liar = LipschitzFunction::new("liar", 0.5, |x| x);
        assert!(liar.spot_check(lo, hi, 100, 7).is_some());
    }
}
