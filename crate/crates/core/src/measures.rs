//! Explicit elements of the representing set of the sublinear expectation.
//!
//! A [`PathMeasure`] picks, at every step, a mixture of family members as a
//! function of the past. Every such measure is dominated by the sublinear
//! expectation, and its conditional means stay inside `[μ̲, μ̄]`. For small
//! `n` the path tree is enumerated exactly ([`conditional_means`]); beyond
//! that, [`sample_paths`] draws seeded Monte Carlo paths.
//!
//! # Sampling algorithm
//!
//! Samples come from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`).
//! A uniform `u ∈ [0, 1)` is `(next_u64 >> 11) · 2⁻⁵³`. For each path and
//! each step, in order:
//!
//! 1. draw `u₁`; the member is the first index `j` with
//!    `u₁ < w_0 + ⋯ + w_j` over the mixture weights (the last member with
//!    positive weight if rounding leaves `u₁` above the total);
//! 2. draw `u₂`; the atom is chosen the same way from the member's weights.
//!
//! Paths are generated one after another, so a run is fully determined by
//! the seed and the inputs.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::ambiguity::{
    max_abs_moment, mean_bounds_unchecked, upper_variance_on, validate_family, AmbiguityFamily,
    FamilyError, ATOM_TOL,
};
use crate::engine::{
    expectation_under_policy, extract_argmax_policy, iid_sum_expectation, mixture_is_valid,
    EngineError, EngineOptions, SelectionPolicy, SumRule,
};
use crate::lln_rates::{interval_max, theorem3_bound, unit_f64, LipschitzFunction, RateError};
use crate::numeric::{pairwise_sum, powf, round, sqrt, weighted_sum};

/// Default deepest horizon for exact path enumeration.
pub const DEFAULT_MAX_ENUMERATION_STEPS: usize = 8;

/// Slack for conditional-mean containment and the martingale property.
pub const ENUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureOptions {
    pub engine: EngineOptions,
    pub max_enumeration_steps: usize,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            engine: EngineOptions::default(),
            max_enumeration_steps: DEFAULT_MAX_ENUMERATION_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureError {
    Family(FamilyError),
    Engine(EngineError),
    Rate(RateError),
    MuStarOutOfRange { mu_star: f64, lower: f64, upper: f64 },
    POutOfRange { p: f64 },
    TooManySteps { n: usize, max: usize },
    WrongMixtureLength { expected: usize, got: usize },
}

impl From<FamilyError> for MeasureError {
    fn from(e: FamilyError) -> Self {
        MeasureError::Family(e)
    }
}

impl From<EngineError> for MeasureError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Family(f) => MeasureError::Family(f),
            other => MeasureError::Engine(other),
        }
    }
}

impl From<RateError> for MeasureError {
    fn from(e: RateError) -> Self {
        match e {
            RateError::Family(f) => MeasureError::Family(f),
            RateError::Engine(en) => MeasureError::from(en),
            other => MeasureError::Rate(other),
        }
    }
}

impl fmt::Display for MeasureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureError::Family(e) => write!(f, "invalid family: {e}"),
            MeasureError::Engine(e) => e.fmt(f),
            MeasureError::Rate(e) => e.fmt(f),
            MeasureError::MuStarOutOfRange {
                mu_star,
                lower,
                upper,
            } => write!(f, "mu* = {mu_star} lies outside [{lower}, {upper}]"),
            MeasureError::POutOfRange { p } => write!(f, "p must lie in [1, 2], got {p}"),
            MeasureError::TooManySteps { n, max } => {
                write!(f, "exact enumeration is limited to {max} steps, got {n}")
            }
            MeasureError::WrongMixtureLength { expected, got } => {
                write!(f, "mixture has {got} weights, family has {expected} members")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MeasureError {}

type SumFn = dyn Fn(usize, f64) -> Vec<f64> + Send + Sync;
type HistoryFn = dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
enum Rule {
    /// The same mixture at every step.
    Product(Vec<f64>),
    Policy(SelectionPolicy),
    RunningSum(Arc<SumFn>),
    History(Arc<HistoryFn>),
}

/// A history-dependent mixture of family members.
#[derive(Clone)]
pub struct PathMeasure {
    name: String,
    rule: Rule,
}

impl fmt::Debug for PathMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.rule {
            Rule::Product(_) => "product",
            Rule::Policy(_) => "policy",
            Rule::RunningSum(_) => "running-sum",
            Rule::History(_) => "history",
        };
        f.debug_struct("PathMeasure")
            .field("name", &self.name)
            .field("kind", &kind)
            .finish()
    }
}

impl PathMeasure {
    /// i.i.d. draws from the fixed mixture `weights`.
    pub fn product(name: impl Into<String>, weights: Vec<f64>) -> Self {
        PathMeasure {
            name: name.into(),
            rule: Rule::Product(weights),
        }
    }

    /// i.i.d. draws from member `member` of a family with `members` members.
    pub fn pure(member: usize, members: usize) -> Self {
        let mut w = vec![0.0; members];
        w[member] = 1.0;
        PathMeasure::product(alloc::format!("pure_{member}"), w)
    }

    pub fn from_policy(name: impl Into<String>, policy: SelectionPolicy) -> Self {
        PathMeasure {
            name: name.into(),
            rule: Rule::Policy(policy),
        }
    }

    /// Mixture as a function of `(step, S_step)`.
    pub fn running_sum<F>(name: impl Into<String>, rule: F) -> Self
    where
        F: Fn(usize, f64) -> Vec<f64> + Send + Sync + 'static,
    {
        PathMeasure {
            name: name.into(),
            rule: Rule::RunningSum(Arc::new(rule)),
        }
    }

    /// Mixture as a function of `(step, realised atoms so far)`.
    pub fn history<F>(name: impl Into<String>, rule: F) -> Self
    where
        F: Fn(usize, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        PathMeasure {
            name: name.into(),
            rule: Rule::History(Arc::new(rule)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Whether the mixture depends on the past only through the running sum.
    pub fn is_sum_markov(&self) -> bool {
        !matches!(self.rule, Rule::History(_))
    }

    /// Mixture weights for `X_{step+1}` after `history`; `None` if the rule
    /// has no selection there.
    pub fn weights(&self, step: usize, history: &[f64], members: usize) -> Option<Vec<f64>> {
        match &self.rule {
            Rule::Product(w) => Some(w.clone()),
            Rule::Policy(p) => {
                let j = p.select(step, pairwise_sum(history))?;
                let mut w = vec![0.0; members];
                *w.get_mut(j)? = 1.0;
                Some(w)
            }
            Rule::RunningSum(r) => Some(r(step, pairwise_sum(history))),
            Rule::History(r) => Some(r(step, history)),
        }
    }

    /// Exact `E_P[φ(S_n/n)]`: forward mass propagation for sum-Markov rules,
    /// full path enumeration otherwise.
    pub fn expectation<F: Fn(f64) -> f64>(
        &self,
        f: &AmbiguityFamily,
        n: usize,
        phi: F,
        opts: &MeasureOptions,
    ) -> Result<f64, MeasureError> {
        if self.is_sum_markov() {
            Ok(expectation_under_policy(f, n, phi, self, &opts.engine)?)
        } else {
            let d = conditional_means(f, self, n, opts)?;
            let terms: Vec<f64> = (0..d.path_count())
                .map(|p| d.path_probs[p] * phi(d.path_sum(p) / n as f64))
                .collect();
            Ok(pairwise_sum(&terms))
        }
    }
}

impl SumRule for PathMeasure {
    /// History rules are not sum-Markov and report no selection here; use
    /// [`PathMeasure::expectation`] for them.
    fn mixture(&self, step: usize, sum: f64, out: &mut [f64]) -> bool {
        let w = match &self.rule {
            Rule::Product(w) => w.clone(),
            Rule::Policy(p) => return p.mixture(step, sum, out),
            Rule::RunningSum(r) => r(step, sum),
            Rule::History(_) => return false,
        };
        if w.len() != out.len() {
            return false;
        }
        out.copy_from_slice(&w);
        true
    }
}

/// The extremal product measure pinning every step's mean at `μ*`.
#[derive(Debug, Clone)]
pub struct PStar {
    pub measure: PathMeasure,
    pub mu_star: f64,
    /// Weight on the upper-mean member.
    pub lambda: f64,
    pub upper_member: usize,
    pub lower_member: usize,
    pub n: usize,
}

impl PStar {
    /// Mean of each step's mixture.
    pub fn step_mean(&self, f: &AmbiguityFamily) -> f64 {
        let up = f.members[self.upper_member].mean();
        let lo = f.members[self.lower_member].mean();
        if self.upper_member == self.lower_member {
            up
        } else {
            self.lambda * up + (1.0 - self.lambda) * lo
        }
    }
}

/// `P* = ⊗ (λ·P_up + (1 − λ)·P_low)` with `λ = (μ* − μ̲)/(μ̄ − μ̲)`, where
/// `P_up`, `P_low` are the lowest-index members with the largest and
/// smallest means. When `μ̄ = μ̲` it is `P_up` alone.
pub fn construct_pstar(f: &AmbiguityFamily, mu_star: f64, n: usize) -> Result<PStar, MeasureError> {
    validate_family(f)?;
    let means: Vec<f64> = f.members.iter().map(|m| m.mean()).collect();
    let (lower, upper) = mean_bounds_unchecked(f);
    if !(mu_star >= lower - ATOM_TOL && mu_star <= upper + ATOM_TOL) {
        return Err(MeasureError::MuStarOutOfRange {
            mu_star,
            lower,
            upper,
        });
    }
    let upper_member = means.iter().position(|&m| m == upper).expect("max attained");
    let lower_member = means.iter().position(|&m| m == lower).expect("min attained");
    let lambda = if upper > lower {
        ((mu_star - lower) / (upper - lower)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let mut w = vec![0.0; f.len()];
    w[upper_member] += lambda;
    w[lower_member] += 1.0 - lambda;
    Ok(PStar {
        measure: PathMeasure::product(alloc::format!("pstar({mu_star})"), w),
        mu_star,
        lambda,
        upper_member,
        lower_member,
        n,
    })
}

/// Exact decomposition `X_i = E_P[X_i | F_{i−1}] + D_i` over the full
/// path tree.
///
/// Histories of length `i` are indexed lexicographically in base `d`
/// (number of distinct atoms), the first draw most significant. Histories
/// of probability zero are kept; their conditional law is the rule's
/// mixture there.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleDecomposition {
    pub n: usize,
    /// Distinct atom values across the family, ascending.
    pub atom_values: Vec<f64>,
    /// `P(path)` for each of the `d^n` paths.
    pub path_probs: Vec<f64>,
    /// `history_probs[i][h]`: probability of history `h` of length `i`.
    pub history_probs: Vec<Vec<f64>>,
    /// `cond_probs[i][h·d + a]`: `P(X_{i+1} = atom a | h)`.
    pub cond_probs: Vec<Vec<f64>>,
    /// `cond_means[i][h]`: `E_P[X_{i+1} | h]`.
    pub cond_means: Vec<Vec<f64>>,
}

impl MartingaleDecomposition {
    fn d(&self) -> usize {
        self.atom_values.len()
    }

    pub fn path_count(&self) -> usize {
        self.path_probs.len()
    }

    /// Atom realised at step `i` (0-based) on path `p`.
    pub fn path_atom(&self, p: usize, i: usize) -> f64 {
        let d = self.d();
        self.atom_values[(p / d.pow((self.n - 1 - i) as u32)) % d]
    }

    /// Index of the length-`i` prefix of path `p`.
    pub fn history_index(&self, p: usize, i: usize) -> usize {
        p / self.d().pow((self.n - i) as u32)
    }

    pub fn path_sum(&self, p: usize) -> f64 {
        let xs: Vec<f64> = (0..self.n).map(|i| self.path_atom(p, i)).collect();
        pairwise_sum(&xs)
    }

    /// `D_{i+1}` on path `p`.
    pub fn difference(&self, p: usize, i: usize) -> f64 {
        self.path_atom(p, i) - self.cond_means[i][self.history_index(p, i)]
    }

    pub fn total_probability(&self) -> f64 {
        pairwise_sum(&self.path_probs)
    }

    /// `E_P[g(X_{i+1}, E_P[X_{i+1} | F_i])]`, integrating node by node.
    fn step_moment<G: Fn(f64, f64) -> f64>(&self, i: usize, g: G) -> f64 {
        let d = self.d();
        let terms: Vec<f64> = self.history_probs[i]
            .iter()
            .enumerate()
            .map(|(h, &ph)| {
                let c = self.cond_means[i][h];
                let inner = weighted_sum(
                    (0..d).map(|a| self.cond_probs[i][h * d + a] * g(self.atom_values[a], c)),
                );
                ph * inner
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// Largest `|E_P[D_{i+1} | h]|` over all steps and histories.
    pub fn martingale_residual(&self) -> f64 {
        let d = self.d();
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (h, &c) in self.cond_means[i].iter().enumerate() {
                let r = weighted_sum(
                    (0..d).map(|a| self.cond_probs[i][h * d + a] * (self.atom_values[a] - c)),
                );
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Largest `|E_P[D_{i+1}·1_h]|` over all steps and histories `h`.
    pub fn martingale_event_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let d = self.d();
        for i in 0..self.n {
            for (h, &c) in self.cond_means[i].iter().enumerate() {
                let r = weighted_sum((0..d).map(|a| {
                    self.history_probs[i + 1][h * d + a] * (self.atom_values[a] - c)
                }));
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// `E_P[(X_{i+1} − E_P[X_{i+1} | F_i])²]`.
    pub fn conditional_variance(&self, i: usize) -> f64 {
        self.step_moment(i, |x, c| (x - c) * (x - c))
    }

    /// `E_P[|D_{i+1}|^p]`.
    pub fn difference_moment(&self, i: usize, p: f64) -> f64 {
        self.step_moment(i, |x, c| powf((x - c).abs(), p))
    }

    /// `E_P[|X_{i+1}|^p]`.
    pub fn atom_moment(&self, i: usize, p: f64) -> f64 {
        self.step_moment(i, |x, _| powf(x.abs(), p))
    }

    /// `E_P[|E_P[X_{i+1} | F_i]|^p]`.
    pub fn cond_mean_moment(&self, i: usize, p: f64) -> f64 {
        let terms: Vec<f64> = self.history_probs[i]
            .iter()
            .zip(&self.cond_means[i])
            .map(|(&ph, &c)| ph * powf(c.abs(), p))
            .collect();
        pairwise_sum(&terms)
    }

    /// Unconditional `E_P[X_{i+1}]`.
    pub fn step_mean(&self, i: usize) -> f64 {
        self.step_moment(i, |x, _| x)
    }

    /// `E_P[|Σ_i D_i|^p]`, summing over paths.
    pub fn sum_difference_moment(&self, p: f64) -> f64 {
        let terms: Vec<f64> = (0..self.path_count())
            .map(|path| {
                let ds: Vec<f64> = (0..self.n).map(|i| self.difference(path, i)).collect();
                self.path_probs[path] * powf(pairwise_sum(&ds).abs(), p)
            })
            .collect();
        pairwise_sum(&terms)
    }
}

/// Exact conditional means under `m` by enumerating every atom path.
pub fn conditional_means(
    f: &AmbiguityFamily,
    m: &PathMeasure,
    n: usize,
    opts: &MeasureOptions,
) -> Result<MartingaleDecomposition, MeasureError> {
    validate_family(f)?;
    if n == 0 {
        return Err(EngineError::ZeroSteps.into());
    }
    if n > opts.max_enumeration_steps {
        return Err(MeasureError::TooManySteps {
            n,
            max: opts.max_enumeration_steps,
        });
    }
    let atoms = f.distinct_atoms();
    let d = atoms.len();
    let nodes: u128 = (0..=n as u32).map(|i| (d as u128).pow(i)).sum();
    if nodes > opts.engine.state_cap as u128 {
        return Err(EngineError::SupportOverflow {
            states: nodes,
            cap: opts.engine.state_cap,
        }
        .into());
    }
    // member laws over the distinct atoms
    let laws: Vec<Vec<f64>> = f
        .members
        .iter()
        .map(|mem| {
            let mut law = vec![0.0; d];
            for a in &mem.atoms {
                let i = atoms
                    .iter()
                    .position(|&v| (v - a.value).abs() <= ATOM_TOL)
                    .expect("atom listed");
                law[i] = a.weight;
            }
            law
        })
        .collect();

    let mut history_probs = vec![vec![1.0]];
    let mut cond_probs = Vec::with_capacity(n);
    let mut cond_means = Vec::with_capacity(n);
    let mut hist = Vec::with_capacity(n);
    for i in 0..n {
        let count = d.pow(i as u32);
        let mut probs = vec![0.0; count * d];
        let mut means = vec![0.0; count];
        let mut next = vec![0.0; count * d];
        for h in 0..count {
            decode_history(h, i, &atoms, &mut hist);
            let w = m
                .weights(i, &hist, f.len())
                .ok_or_else(|| EngineError::PolicyIncomplete {
                    step: i,
                    sum: pairwise_sum(&hist),
                })?;
            if w.len() != f.len() {
                return Err(MeasureError::WrongMixtureLength {
                    expected: f.len(),
                    got: w.len(),
                });
            }
            if !mixture_is_valid(&w) {
                return Err(EngineError::InvalidMixture {
                    step: i,
                    sum: pairwise_sum(&hist),
                }
                .into());
            }
            let q = &mut probs[h * d..(h + 1) * d];
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = weighted_sum(w.iter().zip(&laws).map(|(&wj, law)| wj * law[a]));
            }
            means[h] = weighted_sum(q.iter().zip(&atoms).map(|(&qa, &x)| qa * x));
            let ph = history_probs[i][h];
            for a in 0..d {
                next[h * d + a] = ph * q[a];
            }
        }
        cond_probs.push(probs);
        cond_means.push(means);
        history_probs.push(next);
    }
    Ok(MartingaleDecomposition {
        n,
        path_probs: history_probs[n].clone(),
        atom_values: atoms,
        history_probs,
        cond_probs,
        cond_means,
    })
}

fn decode_history(mut h: usize, len: usize, atoms: &[f64], out: &mut Vec<f64>) {
    let d = atoms.len();
    out.clear();
    out.resize(len, 0.0);
    for slot in out.iter_mut().rev() {
        *slot = atoms[h % d];
        h /= d;
    }
}

/// Containment of every conditional mean in `[μ̲, μ̄]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop2Report {
    pub holds: bool,
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub min_cond_mean: f64,
    pub max_cond_mean: f64,
    /// Largest distance of a conditional mean outside the interval.
    pub worst_violation: f64,
    /// `(step, history index)` of the worst violation, if any.
    pub worst_at: Option<(usize, usize)>,
}

pub fn prop2_check(
    f: &AmbiguityFamily,
    m: &PathMeasure,
    n: usize,
    opts: &MeasureOptions,
) -> Result<Prop2Report, MeasureError> {
    let dec = conditional_means(f, m, n, opts)?;
    Ok(prop2_from(f, &dec))
}

pub(crate) fn prop2_from(f: &AmbiguityFamily, dec: &MartingaleDecomposition) -> Prop2Report {
    let (lo, hi) = mean_bounds_unchecked(f);
    let mut report = Prop2Report {
        holds: true,
        mu_lower: lo,
        mu_upper: hi,
        min_cond_mean: f64::INFINITY,
        max_cond_mean: f64::NEG_INFINITY,
        worst_violation: 0.0,
        worst_at: None,
    };
    for (i, row) in dec.cond_means.iter().enumerate() {
        for (h, &c) in row.iter().enumerate() {
            report.min_cond_mean = report.min_cond_mean.min(c);
            report.max_cond_mean = report.max_cond_mean.max(c);
            let v = (lo - c).max(c - hi);
            if v > ENUM_TOL {
                report.holds = false;
            }
            if v > report.worst_violation {
                report.worst_violation = v;
                report.worst_at = Some((i, h));
            }
        }
    }
    report
}

/// Both sides of Chatterji's inequality for the martingale differences of a
/// measure, plus the moment chain that bounds them by `4·n·C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatterjiReport {
    pub p: f64,
    /// `E_P[|Σ D_i|^p]`.
    pub lhs: f64,
    /// `Σ_i E_P[|D_i|^p]`.
    pub difference_moment_sum: f64,
    /// `2^{2−p} · Σ_i E_P[|D_i|^p]`.
    pub rhs: f64,
    pub holds: bool,
    /// `2 · Σ_i (E_P[|X_i|^p] + E_P[|E_P[X_i | F_{i−1}]|^p])`.
    pub chain_middle: f64,
    /// `4·n·max_j E_{P_j}[|X|^p]`.
    pub chain_bound: f64,
    pub chain_holds: bool,
}

pub fn chatterji_check(
    f: &AmbiguityFamily,
    m: &PathMeasure,
    n: usize,
    p: f64,
    opts: &MeasureOptions,
) -> Result<ChatterjiReport, MeasureError> {
    if !(1.0..=2.0).contains(&p) {
        return Err(MeasureError::POutOfRange { p });
    }
    let dec = conditional_means(f, m, n, opts)?;
    Ok(chatterji_from(f, &dec, p))
}

pub(crate) fn chatterji_from(
    f: &AmbiguityFamily,
    dec: &MartingaleDecomposition,
    p: f64,
) -> ChatterjiReport {
    let n = dec.n;
    let lhs = dec.sum_difference_moment(p);
    let per_step: Vec<f64> = (0..n).map(|i| dec.difference_moment(i, p)).collect();
    let difference_moment_sum = pairwise_sum(&per_step);
    let rhs = powf(2.0, 2.0 - p) * difference_moment_sum;
    let middle_terms: Vec<f64> = (0..n)
        .map(|i| dec.atom_moment(i, p) + dec.cond_mean_moment(i, p))
        .collect();
    let chain_middle = 2.0 * pairwise_sum(&middle_terms);
    let chain_bound = 4.0 * n as f64 * max_abs_moment(f, p);
    let tol = crate::lln_rates::BOUND_TOL;
    ChatterjiReport {
        p,
        lhs,
        difference_moment_sum,
        rhs,
        holds: lhs <= rhs + ENUM_TOL,
        chain_middle,
        chain_bound,
        chain_holds: lhs <= chain_bound + tol
            && rhs <= chain_middle + tol
            && chain_middle <= chain_bound + tol,
    }
}

/// Largest per-step conditional variance against `σ̄²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDomination {
    pub max_conditional_variance: f64,
    pub sigma_bar_sq: f64,
    pub holds: bool,
}

pub fn variance_domination(f: &AmbiguityFamily, dec: &MartingaleDecomposition) -> VarianceDomination {
    let (lo, hi) = mean_bounds_unchecked(f);
    let (sigma_bar_sq, _) = upper_variance_on(f, lo, hi);
    let max_conditional_variance = (0..dec.n)
        .map(|i| dec.conditional_variance(i))
        .fold(0.0, f64::max);
    VarianceDomination {
        max_conditional_variance,
        sigma_bar_sq,
        holds: max_conditional_variance <= sigma_bar_sq + ENUM_TOL,
    }
}

/// `count` seeded paths of length `n`, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub n: usize,
    pub count: usize,
    pub atoms: Vec<f64>,
}

/// Sample mean and standard deviation of `φ(S_n/n)` over a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation (`count − 1` denominator).
    pub std: f64,
    pub count: usize,
}

impl McEstimate {
    pub fn standard_error(&self) -> f64 {
        self.std / sqrt(self.count as f64)
    }
}

impl SampleSet {
    pub fn path(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.n..(i + 1) * self.n]
    }

    pub fn estimate<F: Fn(f64) -> f64>(&self, phi: F) -> McEstimate {
        let values: Vec<f64> = (0..self.count)
            .map(|i| phi(pairwise_sum(self.path(i)) / self.n as f64))
            .collect();
        let mean = pairwise_sum(&values) / self.count as f64;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if self.count > 1 {
            pairwise_sum(&sq) / (self.count - 1) as f64
        } else {
            0.0
        };
        McEstimate {
            mean,
            std: sqrt(var),
            count: self.count,
        }
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Draws `count` paths under `m`; see the module docs for the algorithm.
pub fn sample_paths(
    f: &AmbiguityFamily,
    m: &PathMeasure,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<SampleSet, MeasureError> {
    validate_family(f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut atoms = Vec::with_capacity(n * count);
    let mut hist = Vec::with_capacity(n);
    let atom_weights: Vec<Vec<f64>> = f
        .members
        .iter()
        .map(|m| m.atoms.iter().map(|a| a.weight).collect())
        .collect();
    let check = |w: &[f64], step: usize, hist: &[f64]| -> Result<(), MeasureError> {
        if w.len() != f.len() {
            return Err(MeasureError::WrongMixtureLength {
                expected: f.len(),
                got: w.len(),
            });
        }
        if !mixture_is_valid(w) {
            return Err(EngineError::InvalidMixture {
                step,
                sum: pairwise_sum(hist),
            }
            .into());
        }
        Ok(())
    };
    // a product rule draws every step from the same mixture
    let fixed = match &m.rule {
        Rule::Product(w) => {
            check(w, 0, &[])?;
            Some(w.clone())
        }
        _ => None,
    };
    for _ in 0..count {
        hist.clear();
        for step in 0..n {
            let owned;
            let w: &[f64] = match &fixed {
                Some(w) => w,
                None => {
                    owned = m.weights(step, &hist, f.len()).ok_or_else(|| {
                        EngineError::PolicyIncomplete {
                            step,
                            sum: pairwise_sum(&hist),
                        }
                    })?;
                    check(&owned, step, &hist)?;
                    &owned
                }
            };
            let j = pick(w, unit_f64(&mut rng));
            let a = pick(&atom_weights[j], unit_f64(&mut rng));
            hist.push(f.members[j].atoms[a].value);
        }
        atoms.extend_from_slice(&hist);
    }
    Ok(SampleSet { n, count, atoms })
}

/// The lower half of the rate theorem, checked through `P*`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    pub n: usize,
    pub mu_star: f64,
    /// `φ(μ*) = max_{[μ̲, μ̄]} φ` (grid value).
    pub phi_mu_star: f64,
    /// `E_{P*}[φ(S_n/n)]`.
    pub pstar_expectation: f64,
    /// `Ê[φ(S_n/n)]`.
    pub sublinear_expectation: f64,
    /// `E_{P*} ≤ Ê` within `1e-12`.
    pub dominance_holds: bool,
    /// `(α, bound, φ(μ*) − E_{P*} ≤ bound)`.
    pub bounds: Vec<(f64, f64, bool)>,
}

impl LowerBoundReport {
    pub fn holds(&self) -> bool {
        self.dominance_holds && self.bounds.iter().all(|b| b.2)
    }

    pub fn deficit(&self) -> f64 {
        self.phi_mu_star - self.pstar_expectation
    }
}

pub fn lower_bound_check(
    f: &AmbiguityFamily,
    phi: &LipschitzFunction,
    n: usize,
    alphas: &[f64],
    opts: &MeasureOptions,
) -> Result<LowerBoundReport, MeasureError> {
    let (lo, hi) = crate::ambiguity::mean_bounds(f)?;
    let top = interval_max(phi, lo, hi)?;
    let pstar = construct_pstar(f, top.argmax_r, n)?;
    let pstar_expectation = pstar.measure.expectation(f, n, |x| phi.eval(x), opts)?;
    let sublinear_expectation = iid_sum_expectation(f, n, |x| phi.eval(x), &opts.engine)?;
    let deficit = top.max_value - pstar_expectation;
    let mut bounds = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let c = crate::ambiguity::moment_c_alpha(f, alpha)?;
        let b = theorem3_bound(phi.lipschitz(), c, alpha, n)?;
        bounds.push((alpha, b, deficit <= b + crate::lln_rates::BOUND_TOL));
    }
    Ok(LowerBoundReport {
        n,
        mu_star: top.argmax_r,
        phi_mu_star: top.max_value,
        pstar_expectation,
        sublinear_expectation,
        dominance_holds: pstar_expectation <= sublinear_expectation + ENUM_TOL,
        bounds,
    })
}

/// Standard constructed measures for a family: each pure member, the uniform
/// mixture, `P*` at `μ̲`, the midpoint and `μ̄`, a running-sum steering rule,
/// a history rule keyed on the previous atom, and the argmax policy for
/// `−|x − mid|`.
pub fn measure_corpus(
    f: &AmbiguityFamily,
    n: usize,
    opts: &EngineOptions,
) -> Result<Vec<PathMeasure>, MeasureError> {
    validate_family(f)?;
    let k = f.len();
    let (lo, hi) = mean_bounds_unchecked(f);
    let mid = 0.5 * (lo + hi);
    let mut out: Vec<PathMeasure> = (0..k).map(|j| PathMeasure::pure(j, k)).collect();
    out.push(PathMeasure::product("uniform", vec![1.0 / k as f64; k]));
    for (label, mu) in [("pstar_lo", lo), ("pstar_mid", mid), ("pstar_hi", hi)] {
        let mut p = construct_pstar(f, mu, n)?.measure;
        p.name = label.into();
        out.push(p);
    }
    let means: Vec<f64> = f.members.iter().map(|m| m.mean()).collect();
    let up = means.iter().position(|&m| m == hi).expect("max attained");
    let down = means.iter().position(|&m| m == lo).expect("min attained");
    out.push(PathMeasure::running_sum("steer", move |step, sum| {
        let mut w = vec![0.0; k];
        let avg = if step == 0 { lo } else { sum / step as f64 };
        w[if avg < mid { up } else { down }] = 1.0;
        w
    }));
    let lattice = f.lattice;
    out.push(PathMeasure::history("parity", move |step, hist| {
        let mut w = vec![0.0; k];
        let j = match hist.last() {
            None => step % k,
            Some(&x) => {
                let idx = round((x - lattice.origin) / lattice.step) as i64;
                idx.rem_euclid(k as i64) as usize
            }
        };
        w[j] = 1.0;
        w
    }));
    let policy = extract_argmax_policy(f, n, move |x| -(x - mid).abs(), opts)?;
    out.push(PathMeasure::from_policy("argmax", policy));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::{DiscreteDistribution, LatticeSpec};

    fn coin() -> AmbiguityFamily {
        AmbiguityFamily::new(
            LatticeSpec::integers(),
            vec![DiscreteDistribution::new(&[(-1.0, 0.5), (1.0, 0.5)])],
        )
    }

    fn two_coins() -> AmbiguityFamily {
        AmbiguityFamily::new(
            LatticeSpec::integers(),
            vec![
                DiscreteDistribution::new(&[(0.0, 0.5), (1.0, 0.5)]),
                DiscreteDistribution::new(&[(0.0, 0.1), (1.0, 0.9)]),
            ],
        )
    }

    fn o() -> MeasureOptions {
        MeasureOptions::default()
    }

    #[test]
    fn pstar_examples() {
        let zo = AmbiguityFamily::point_masses(&[0.0, 1.0]);
        let p = construct_pstar(&zo, 0.3, 4).unwrap();
        assert!((p.lambda - 0.3).abs() < 1e-15);
        assert_eq!((p.upper_member, p.lower_member), (1, 0));

        let p = construct_pstar(&coin(), 0.0, 4).unwrap();
        assert_eq!((p.lambda, p.upper_member, p.lower_member), (1.0, 0, 0));

        let p = construct_pstar(&zo, 1.0, 3).unwrap();
        assert_eq!(p.lambda, 1.0);
        let d = conditional_means(&zo, &p.measure, 3, &o()).unwrap();
        for i in 0..3 {
            assert_eq!(d.step_mean(i), 1.0);
        }
        assert!(matches!(
            construct_pstar(&zo, 1.5, 3),
            Err(MeasureError::MuStarOutOfRange { .. })
        ));
    }

    #[test]
    fn conditional_mean_examples() {
        let single = coin();
        let d = conditional_means(&single, &PathMeasure::pure(0, 1), 3, &o()).unwrap();
        assert!(d.cond_means.iter().flatten().all(|&c| c == 0.0));
        assert_eq!(d.total_probability(), 1.0);

        let zo = AmbiguityFamily::point_masses(&[0.0, 1.0]);
        let p = construct_pstar(&zo, 0.3, 4).unwrap();
        let d = conditional_means(&zo, &p.measure, 4, &o()).unwrap();
        assert!(d.cond_means.iter().flatten().all(|&c| (c - 0.3).abs() < 1e-15));

        let f = two_coins();
        let parity = PathMeasure::history("parity", |_, h: &[f64]| match h.last() {
            Some(&x) if x > 0.5 => vec![0.0, 1.0],
            _ => vec![1.0, 0.0],
        });
        let r = prop2_check(&f, &parity, 5, &o()).unwrap();
        assert!(r.holds);
        assert_eq!((r.min_cond_mean, r.max_cond_mean), (0.5, 0.9));
    }

    #[test]
    fn decomposition_is_a_martingale() {
        let f = two_coins();
        for m in measure_corpus(&f, 4, &EngineOptions::default()).unwrap() {
            let d = conditional_means(&f, &m, 4, &o()).unwrap();
            assert!((d.total_probability() - 1.0).abs() < 1e-12);
            assert!(d.martingale_residual() < 1e-12, "{}", m.name());
            assert!(d.martingale_event_residual() < 1e-12, "{}", m.name());
        }
    }

    #[test]
    fn chatterji_examples() {
        let c = coin();
        let m = PathMeasure::pure(0, 1);
        let r = chatterji_check(&c, &m, 2, 2.0, &o()).unwrap();
        assert_eq!((r.lhs, r.rhs), (2.0, 2.0));
        assert!(r.holds && r.chain_holds);
        let r = chatterji_check(&c, &m, 2, 1.0, &o()).unwrap();
        assert_eq!((r.lhs, r.rhs), (1.0, 4.0));
        assert!(r.holds);

        let f = two_coins();
        let p = construct_pstar(&f, 0.6, 3).unwrap();
        let r = chatterji_check(&f, &p.measure, 3, 1.5, &o()).unwrap();
        assert!(r.holds && r.chain_holds, "{r:?}");

        for bad in [0.5, 2.5] {
            assert!(matches!(
                chatterji_check(&c, &m, 2, bad, &o()),
                Err(MeasureError::POutOfRange { .. })
            ));
        }
    }

    #[test]
    fn enumeration_limits() {
        let c = coin();
        let m = PathMeasure::pure(0, 1);
        assert!(matches!(
            conditional_means(&c, &m, 9, &o()),
            Err(MeasureError::TooManySteps { n: 9, max: 8 })
        ));
        let tight = MeasureOptions {
            engine: EngineOptions { state_cap: 10 },
            ..o()
        };
        assert!(matches!(
            conditional_means(&c, &m, 4, &tight),
            Err(MeasureError::Engine(EngineError::SupportOverflow { .. }))
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let point = AmbiguityFamily::point_masses(&[2.0]);
        let s = sample_paths(&point, &PathMeasure::pure(0, 1), 5, 20, 1).unwrap();
        assert!(s.atoms.iter().all(|&x| x == 2.0));

        let f = two_coins();
        let p = construct_pstar(&f, 0.7, 10).unwrap();
        let a = sample_paths(&f, &p.measure, 10, 500, 99).unwrap();
        let b = sample_paths(&f, &p.measure, 10, 500, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_paths(&f, &p.measure, 10, 500, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_rejects_incomplete_rules() {
        let f = two_coins();
        let policy = SelectionPolicy::from_fn(&f, 3, &EngineOptions::default(), |k, _| {
            (k < 2).then_some(0)
        })
        .unwrap();
        let m = PathMeasure::from_policy("short", policy);
        assert!(matches!(
            sample_paths(&f, &m, 3, 4, 0),
            Err(MeasureError::Engine(EngineError::PolicyIncomplete { step: 2, .. }))
        ));
    }

    #[test]
    fn lower_bound_examples() {
        let point = AmbiguityFamily::new(
            LatticeSpec::new(0.0, 0.5),
            vec![DiscreteDistribution::point_mass(0.5)],
        );
        let phi = LipschitzFunction::abs_dev(0.0);
        let r = lower_bound_check(&point, &phi, 6, &[1.0], &o()).unwrap();
        assert_eq!(
            (r.phi_mu_star, r.pstar_expectation, r.sublinear_expectation),
            (0.5, 0.5, 0.5)
        );

        let zo = AmbiguityFamily::point_masses(&[0.0, 1.0]);
        let r = lower_bound_check(&zo, &LipschitzFunction::neg_abs_dev(0.5), 4, &[0.5, 1.0], &o())
            .unwrap();
        assert!(r.holds());
        assert!(r.pstar_expectation <= r.sublinear_expectation);
        assert!(r.sublinear_expectation <= 0.0 && r.phi_mu_star == 0.0);

        let pm = AmbiguityFamily::point_masses(&[-1.0, 1.0]);
        let r = lower_bound_check(&pm, &LipschitzFunction::linear(1.0, 0.0), 7, &[1.0], &o())
            .unwrap();
        assert_eq!(r.mu_star, 1.0);
        assert_eq!((r.pstar_expectation, r.sublinear_expectation), (1.0, 1.0));
    }

    #[test]
    fn history_expectation_matches_enumeration_route() {
        let f = two_coins();
        let m = PathMeasure::history("h", |k, h: &[f64]| {
            if k % 2 == 0 || h.last() == Some(&0.0) {
                vec![0.25, 0.75]
            } else {
                vec![1.0, 0.0]
            }
        });
        let e = m.expectation(&f, 5, |x| x * x, &o()).unwrap();
        let ub = iid_sum_expectation(&f, 5, |x| x * x, &EngineOptions::default()).unwrap();
        assert!(e <= ub + 1e-12);
        assert!(e > 0.0);
    }
}
