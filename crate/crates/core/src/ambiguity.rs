//! Ambiguity families of discrete distributions on a shared lattice.
//!
//! A family `{P_1, …, P_m}` generates the one-step sublinear expectation
//! `Ê[ψ(X)] = max_j E_{P_j}[ψ(X)]`. Expectations are linear in the measure,
//! so the maximum over the convex hull of the family is attained at one of
//! the generators and the finite maximum is exact.

use alloc::vec::Vec;
use core::fmt;

use crate::numeric::{first_argmax, powf, round, weighted_sum};

/// Absolute tolerance for lattice membership and weight normalisation.
pub const ATOM_TOL: f64 = 1e-12;

/// Absolute interval width at which the upper-variance search stops.
pub const VARIANCE_SEARCH_WIDTH: f64 = 1e-12;

const GOLDEN_MAX_ITER: usize = 512;

/// The lattice `origin + k·step`, `k ∈ ℤ`, carrying every atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub origin: f64,
    pub step: f64,
}

impl LatticeSpec {
    pub fn new(origin: f64, step: f64) -> Self {
        LatticeSpec { origin, step }
    }

    /// The integer lattice `ℤ`.
    pub fn integers() -> Self {
        LatticeSpec::new(0.0, 1.0)
    }

    /// Lattice index of `value`, or `None` if it is not within [`ATOM_TOL`]
    /// of a lattice point.
    pub fn index_of(&self, value: f64) -> Option<i64> {
        let k = round((value - self.origin) / self.step);
        if !k.is_finite() || k.abs() > (i64::MAX / 4) as f64 {
            return None;
        }
        let k = k as i64;
        if (self.point(k) - value).abs() <= ATOM_TOL {
            Some(k)
        } else {
            None
        }
    }

    pub fn point(&self, index: i64) -> f64 {
        self.origin + index as f64 * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// A finitely supported probability distribution, atoms in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    pub atoms: Vec<Atom>,
}

impl DiscreteDistribution {
    /// Builds a distribution from `(value, weight)` pairs without checking
    /// them; see [`validate_family`].
    pub fn new(pairs: &[(f64, f64)]) -> Self {
        DiscreteDistribution {
            atoms: pairs
                .iter()
                .map(|&(value, weight)| Atom { value, weight })
                .collect(),
        }
    }

    pub fn point_mass(value: f64) -> Self {
        DiscreteDistribution::new(&[(value, 1.0)])
    }

    /// `E_P[ψ(X)]`, summed pairwise in atom order.
    pub fn expect<F: Fn(f64) -> f64>(&self, psi: F) -> f64 {
        weighted_sum(self.atoms.iter().map(|a| a.weight * psi(a.value)))
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    /// `E_P[|X|^p]`.
    pub fn abs_moment(&self, p: f64) -> f64 {
        self.expect(|x| powf(x.abs(), p))
    }
}

/// A nonempty family of distributions on one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityFamily {
    pub lattice: LatticeSpec,
    pub members: Vec<DiscreteDistribution>,
}

impl AmbiguityFamily {
    pub fn new(lattice: LatticeSpec, members: Vec<DiscreteDistribution>) -> Self {
        AmbiguityFamily { lattice, members }
    }

    /// Point masses on the integer lattice.
    pub fn point_masses(values: &[f64]) -> Self {
        AmbiguityFamily::new(
            LatticeSpec::integers(),
            values
                .iter()
                .map(|&v| DiscreteDistribution::point_mass(v))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Smallest and largest atom value over all members.
    pub fn atom_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for m in &self.members {
            for a in &m.atoms {
                lo = lo.min(a.value);
                hi = hi.max(a.value);
            }
        }
        (lo, hi)
    }

    /// Distinct atom values over all members, ascending.
    pub fn distinct_atoms(&self) -> Vec<f64> {
        let mut idx: Vec<i64> = self
            .members
            .iter()
            .flat_map(|m| m.atoms.iter())
            .filter_map(|a| self.lattice.index_of(a.value))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx.into_iter().map(|k| self.lattice.point(k)).collect()
    }
}

/// First violated invariant found by [`validate_family`].
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyError {
    EmptyFamily,
    NonPositiveStep { step: f64 },
    NonFiniteLattice,
    EmptyDistribution { member: usize },
    NonFiniteAtom { member: usize, atom: usize },
    NegativeWeight { member: usize, atom: usize, weight: f64 },
    WeightsNotNormalized { member: usize, total: f64 },
    OffLattice { member: usize, atom: usize, value: f64 },
    AtomsNotIncreasing { member: usize, atom: usize },
    AlphaOutOfRange { alpha: f64 },
}

impl fmt::Display for FamilyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyError::EmptyFamily => write!(f, "family has no members"),
            FamilyError::NonPositiveStep { step } => {
                write!(f, "lattice step must be > 0, got {step}")
            }
            FamilyError::NonFiniteLattice => write!(f, "lattice origin and step must be finite"),
            FamilyError::EmptyDistribution { member } => {
                write!(f, "member {member} has no atoms")
            }
            FamilyError::NonFiniteAtom { member, atom } => {
                write!(f, "member {member} atom {atom} is not finite")
            }
            FamilyError::NegativeWeight {
                member,
                atom,
                weight,
            } => write!(f, "member {member} atom {atom} has negative weight {weight}"),
            FamilyError::WeightsNotNormalized { member, total } => {
                write!(f, "member {member} weights sum to {total}, expected 1")
            }
            FamilyError::OffLattice {
                member,
                atom,
                value,
            } => write!(f, "member {member} atom {atom} value {value} is off the lattice"),
            FamilyError::AtomsNotIncreasing { member, atom } => write!(
                f,
                "member {member} atom {atom} does not strictly increase on its predecessor"
            ),
            FamilyError::AlphaOutOfRange { alpha } => {
                write!(f, "alpha must lie in (0, 1], got {alpha}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FamilyError {}

/// Successful validation. Duplicate members are legal but reported.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    /// Pairs `(i, j)`, `i < j`, of members with identical atoms and weights.
    pub duplicate_members: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn has_warnings(&self) -> bool {
        !self.duplicate_members.is_empty()
    }
}

/// Checks every structural invariant and returns the first violation.
pub fn validate_family(f: &AmbiguityFamily) -> Result<ValidationReport, FamilyError> {
    if f.members.is_empty() {
        return Err(FamilyError::EmptyFamily);
    }
    let LatticeSpec { origin, step } = f.lattice;
    if !origin.is_finite() || !step.is_finite() {
        return Err(FamilyError::NonFiniteLattice);
    }
    if step <= 0.0 {
        return Err(FamilyError::NonPositiveStep { step });
    }
    for (mi, m) in f.members.iter().enumerate() {
        if m.atoms.is_empty() {
            return Err(FamilyError::EmptyDistribution { member: mi });
        }
        for (ai, a) in m.atoms.iter().enumerate() {
            if !a.value.is_finite() || !a.weight.is_finite() {
                return Err(FamilyError::NonFiniteAtom {
                    member: mi,
                    atom: ai,
                });
            }
            if a.weight < 0.0 {
                return Err(FamilyError::NegativeWeight {
                    member: mi,
                    atom: ai,
                    weight: a.weight,
                });
            }
        }
        let total = weighted_sum(m.atoms.iter().map(|a| a.weight));
        if (total - 1.0).abs() > ATOM_TOL {
            return Err(FamilyError::WeightsNotNormalized { member: mi, total });
        }
        for (ai, a) in m.atoms.iter().enumerate() {
            if f.lattice.index_of(a.value).is_none() {
                return Err(FamilyError::OffLattice {
                    member: mi,
                    atom: ai,
                    value: a.value,
                });
            }
            if ai > 0 && a.value <= m.atoms[ai - 1].value {
                return Err(FamilyError::AtomsNotIncreasing {
                    member: mi,
                    atom: ai,
                });
            }
        }
    }
    let mut report = ValidationReport::default();
    for i in 0..f.members.len() {
        for j in i + 1..f.members.len() {
            if f.members[i] == f.members[j] {
                report.duplicate_members.push((i, j));
            }
        }
    }
    Ok(report)
}

/// `(μ̲, μ̄)`: smallest and largest member mean.
pub fn mean_bounds(f: &AmbiguityFamily) -> Result<(f64, f64), FamilyError> {
    validate_family(f)?;
    Ok(mean_bounds_unchecked(f))
}

pub(crate) fn mean_bounds_unchecked(f: &AmbiguityFamily) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for m in &f.members {
        let mean = m.mean();
        lo = lo.min(mean);
        hi = hi.max(mean);
    }
    (lo, hi)
}

/// `C_α = Ê[|X|^{1+α}]`, the largest member `(1+α)`-th absolute moment.
pub fn moment_c_alpha(f: &AmbiguityFamily, alpha: f64) -> Result<f64, FamilyError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(FamilyError::AlphaOutOfRange { alpha });
    }
    validate_family(f)?;
    Ok(max_abs_moment(f, 1.0 + alpha))
}

/// `max_j E_{P_j}[|X|^p]` for any `p ≥ 0`.
pub(crate) fn max_abs_moment(f: &AmbiguityFamily, p: f64) -> f64 {
    f.members
        .iter()
        .map(|m| m.abs_moment(p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `g(μ) = max_j E_{P_j}[(X − μ)²]`.
pub(crate) fn variance_objective(f: &AmbiguityFamily, mu: f64) -> f64 {
    f.members
        .iter()
        .map(|m| m.expect(|x| (x - mu) * (x - mu)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Upper variance `σ̄² = inf_{μ ∈ [μ̲, μ̄]} Ê[(X − μ)²]` and a minimiser.
///
/// The objective is a maximum of parabolas with unit leading coefficient and
/// therefore convex; golden-section search brackets the minimiser down to
/// [`VARIANCE_SEARCH_WIDTH`] and the objective is evaluated at the midpoint.
pub fn upper_variance(f: &AmbiguityFamily) -> Result<(f64, f64), FamilyError> {
    validate_family(f)?;
    let (lo, hi) = mean_bounds_unchecked(f);
    Ok(upper_variance_on(f, lo, hi))
}

pub(crate) fn upper_variance_on(f: &AmbiguityFamily, lo: f64, hi: f64) -> (f64, f64) {
    if lo >= hi {
        return (variance_objective(f, lo), lo);
    }
    let mu = golden_section_min(|mu| variance_objective(f, mu), lo, hi);
    (variance_objective(f, mu), mu)
}

/// Minimiser of a convex function on `[a, b]`, returned as the midpoint of
/// the final bracket.
fn golden_section_min<F: Fn(f64) -> f64>(g: F, mut a: f64, mut b: f64) -> f64 {
    // 1/φ
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    let mut iter = 0;
    while b - a > VARIANCE_SEARCH_WIDTH && iter < GOLDEN_MAX_ITER {
        if gc <= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - INV_PHI * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + INV_PHI * (b - a);
            gd = g(d);
        }
        iter += 1;
    }
    0.5 * (a + b)
}

/// `Ê[ψ(X)] = max_j E_{P_j}[ψ(X)]`.
pub fn one_step_expectation<F: Fn(f64) -> f64>(
    f: &AmbiguityFamily,
    psi: F,
) -> Result<f64, FamilyError> {
    one_step_argmax(f, psi).map(|(v, _)| v)
}

/// Like [`one_step_expectation`], also returning the lowest-index member
/// attaining the maximum.
pub fn one_step_argmax<F: Fn(f64) -> f64>(
    f: &AmbiguityFamily,
    psi: F,
) -> Result<(f64, usize), FamilyError> {
    validate_family(f)?;
    let values: Vec<f64> = f.members.iter().map(|m| m.expect(&psi)).collect();
    let (i, v) = first_argmax(&values).expect("validated family is nonempty");
    Ok((v, i))
}

/// Scalar moment quantities entering the rate bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mu_lower: f64,
    pub mu_upper: f64,
    /// `(α, C_α)` pairs in the order requested.
    pub c_alpha: Vec<(f64, f64)>,
    pub sigma_bar_sq: f64,
    pub sigma_bar_argmin: f64,
}

impl MomentSummary {
    pub fn c_alpha(&self, alpha: f64) -> Option<f64> {
        self.c_alpha
            .iter()
            .find(|(a, _)| *a == alpha)
            .map(|&(_, c)| c)
    }

    pub fn sigma_bar(&self) -> f64 {
        crate::numeric::sqrt(self.sigma_bar_sq)
    }

    pub fn spread(&self) -> f64 {
        self.mu_upper - self.mu_lower
    }
}

pub fn moment_summary(f: &AmbiguityFamily, alphas: &[f64]) -> Result<MomentSummary, FamilyError> {
    validate_family(f)?;
    let mut c_alpha = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        c_alpha.push((alpha, moment_c_alpha(f, alpha)?));
    }
    let (mu_lower, mu_upper) = mean_bounds_unchecked(f);
    let (sigma_bar_sq, sigma_bar_argmin) = upper_variance_on(f, mu_lower, mu_upper);
    Ok(MomentSummary {
        mu_lower,
        mu_upper,
        c_alpha,
        sigma_bar_sq,
        sigma_bar_argmin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn fam(members: &[&[(f64, f64)]]) -> AmbiguityFamily {
        AmbiguityFamily::new(
            LatticeSpec::integers(),
            members.iter().map(|m| DiscreteDistribution::new(m)).collect(),
        )
    }

    #[test]
    fn validation_examples() {
        assert!(validate_family(&fam(&[&[(0.0, 0.5), (1.0, 0.5)]])).is_ok());
        assert!(matches!(
            validate_family(&fam(&[&[(0.0, 0.6), (1.0, 0.5)]])),
            Err(FamilyError::WeightsNotNormalized { member: 0, .. })
        ));
        assert!(matches!(
            validate_family(&fam(&[&[(0.5, 1.0)]])),
            Err(FamilyError::OffLattice {
                member: 0,
                atom: 0,
                ..
            })
        ));
    }

    #[test]
    fn validation_error_paths() {
        assert_eq!(
            validate_family(&fam(&[])),
            Err(FamilyError::EmptyFamily)
        );
        let mut f = fam(&[&[(0.0, 1.0)]]);
        f.lattice.step = 0.0;
        assert!(matches!(
            validate_family(&f),
            Err(FamilyError::NonPositiveStep { .. })
        ));
        assert!(matches!(
            validate_family(&fam(&[&[(0.0, 1.2), (1.0, -0.2)]])),
            Err(FamilyError::NegativeWeight {
                member: 0,
                atom: 1,
                ..
            })
        ));
        assert!(matches!(
            validate_family(&fam(&[&[(1.0, 0.5), (0.0, 0.5)]])),
            Err(FamilyError::AtomsNotIncreasing { member: 0, atom: 1 })
        ));
        assert!(matches!(
            validate_family(&fam(&[&[(1.0, 0.5), (1.0, 0.5)]])),
            Err(FamilyError::AtomsNotIncreasing { .. })
        ));
        assert_eq!(
            validate_family(&fam(&[&[(0.0, 1.0)], &[]])),
            Err(FamilyError::EmptyDistribution { member: 1 })
        );
    }

    #[test]
    fn duplicates_are_warnings() {
        let r = validate_family(&fam(&[&[(0.0, 1.0)], &[(1.0, 1.0)], &[(0.0, 1.0)]])).unwrap();
        assert_eq!(r.duplicate_members, vec![(0, 2)]);
        assert!(r.has_warnings());
    }

    #[test]
    fn off_lattice_respects_tolerance() {
        let f = AmbiguityFamily::new(
            LatticeSpec::new(0.0, 0.1),
            vec![DiscreteDistribution::new(&[(0.30000000000000004, 1.0)])],
        );
        assert!(validate_family(&f).is_ok());
        let g = AmbiguityFamily::new(
            LatticeSpec::new(0.0, 0.1),
            vec![DiscreteDistribution::new(&[(0.3 + 1e-9, 1.0)])],
        );
        assert!(validate_family(&g).is_err());
    }

    #[test]
    fn mean_bounds_examples() {
        assert_eq!(
            mean_bounds(&AmbiguityFamily::point_masses(&[-1.0, 1.0])).unwrap(),
            (-1.0, 1.0)
        );
        assert_eq!(
            mean_bounds(&fam(&[&[(0.0, 0.5), (2.0, 0.5)], &[(0.0, 0.25), (2.0, 0.75)]])).unwrap(),
            (1.0, 1.5)
        );
        assert_eq!(
            mean_bounds(&fam(&[&[(-1.0, 0.5), (1.0, 0.5)]])).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn c_alpha_examples() {
        let pm = AmbiguityFamily::point_masses(&[-1.0, 1.0]);
        assert_eq!(moment_c_alpha(&pm, 1.0).unwrap(), 1.0);
        let coin = fam(&[&[(-1.0, 0.5), (1.0, 0.5)]]);
        assert_eq!(moment_c_alpha(&coin, 0.5).unwrap(), 1.0);
        assert_eq!(moment_c_alpha(&fam(&[&[(0.0, 0.5), (2.0, 0.5)]]), 1.0).unwrap(), 2.0);
        for bad in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                moment_c_alpha(&coin, bad),
                Err(FamilyError::AlphaOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn upper_variance_examples() {
        let (v, mu) = upper_variance(&AmbiguityFamily::point_masses(&[-1.0, 1.0])).unwrap();
        assert!((v - 1.0).abs() < 1e-12 && mu.abs() < 1e-9);
        let (v, mu) = upper_variance(&fam(&[&[(0.0, 0.5), (1.0, 0.5)]])).unwrap();
        assert_eq!((v, mu), (0.25, 0.5));
    }

    #[test]
    fn upper_variance_two_coins_matches_grid_scan() {
        let f = fam(&[&[(0.0, 0.5), (2.0, 0.5)], &[(0.0, 0.25), (2.0, 0.75)]]);
        // grid scan of g over [1, 1.5], step 1e-6
        let mut best = f64::INFINITY;
        let mut best_mu = 0.0;
        for i in 0..=500_000 {
            let mu = 1.0 + i as f64 * 1e-6;
            let g = variance_objective(&f, mu);
            if g < best {
                best = g;
                best_mu = mu;
            }
        }
        let (v, mu) = upper_variance(&f).unwrap();
        assert!((v - best).abs() < 1e-9, "{v} vs {best}");
        assert!((best - 1.0).abs() < 1e-12);
        assert!((mu - best_mu).abs() < 1e-6);
        assert!((mu - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_step_examples() {
        let pm = AmbiguityFamily::point_masses(&[-1.0, 1.0]);
        assert_eq!(one_step_expectation(&pm, |x| x * x).unwrap(), 1.0);
        assert_eq!(one_step_expectation(&pm, |x| x).unwrap(), 1.0);
        assert_eq!(-one_step_expectation(&pm, |x| -x).unwrap(), -1.0);
        let f = fam(&[&[(0.0, 0.5), (2.0, 0.5)], &[(1.0, 1.0)]]);
        assert_eq!(one_step_expectation(&f, |x| (x - 1.0).abs()).unwrap(), 1.0);
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        let f = fam(&[&[(0.0, 1.0)], &[(1.0, 1.0)], &[(1.0, 1.0)]]);
        assert_eq!(one_step_argmax(&f, |x| x).unwrap(), (1.0, 1));
        assert_eq!(one_step_argmax(&f, |_| 3.0).unwrap(), (3.0, 0));
    }
}
