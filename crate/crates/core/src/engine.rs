//! Exact evaluation of `Ê[φ(S_n/n)]` for i.i.d. sequences.
//!
//! Under the nested (Peng) independence the value of a sum functional
//! depends on the history only through the running sum, so a backward sweep
//! over the reachable lattice sums computes it exactly:
//!
//! ```text
//! v_n(s) = φ(s/n)
//! v_k(s) = max_j Σ_a P_j(a) · v_{k+1}(s + a)        (k < n)
//! Ê[φ(S_n/n)] = v_0(0)
//! ```
//!
//! Sums are stored as offsets `t` on the reduced lattice
//! `s = k·base + t·unit`, where `base` is the smallest atom and `unit` the
//! lattice step times the gcd of all atom offsets.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::ambiguity::{validate_family, AmbiguityFamily, FamilyError, ATOM_TOL};
use crate::numeric::{first_argmax, pairwise_sum, round, weighted_sum};

/// Default cap on the total number of `(step, sum)` states.
pub const DEFAULT_STATE_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    /// Upper limit on the total number of `(step, sum)` states (or history
    /// nodes for the brute-force evaluator).
    pub state_cap: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    Family(FamilyError),
    ZeroSteps,
    SupportOverflow { states: u128, cap: usize },
    PolicyIncomplete { step: usize, sum: f64 },
    InvalidMixture { step: usize, sum: f64 },
    /// The policy was built for another family geometry or horizon.
    PolicyMismatch,
}

impl From<FamilyError> for EngineError {
    fn from(e: FamilyError) -> Self {
        EngineError::Family(e)
    }
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Family(e) => write!(f, "invalid family: {e}"),
            EngineError::ZeroSteps => write!(f, "number of steps must be at least 1"),
            EngineError::SupportOverflow { states, cap } => write!(
                f,
                "evaluation needs {states} states, above the cap of {cap}; the lattice is too fine for this n"
            ),
            EngineError::PolicyIncomplete { step, sum } => {
                write!(f, "no selection at step {step}, sum {sum}")
            }
            EngineError::InvalidMixture { step, sum } => write!(
                f,
                "mixture weights at step {step}, sum {sum} are negative or do not sum to 1"
            ),
            EngineError::PolicyMismatch => {
                write!(f, "policy does not match the family lattice or horizon")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EngineError {}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Family re-expressed as integer moves on the reduced lattice.
#[derive(Debug, Clone, PartialEq)]
#[doc(hidden)]
pub struct LatticeModel {
    pub(crate) base: f64,
    pub(crate) unit: f64,
    /// Largest single-step offset.
    pub(crate) span: usize,
    /// Per member: `(offset, weight)` in atom order.
    pub(crate) moves: Vec<Vec<(usize, f64)>>,
}

impl LatticeModel {
    pub(crate) fn new(f: &AmbiguityFamily) -> Result<Self, FamilyError> {
        validate_family(f)?;
        let idx: Vec<Vec<(i64, f64)>> = f
            .members
            .iter()
            .map(|m| {
                m.atoms
                    .iter()
                    .map(|a| (f.lattice.index_of(a.value).expect("validated"), a.weight))
                    .collect()
            })
            .collect();
        let kmin = idx.iter().flatten().map(|&(k, _)| k).min().expect("nonempty");
        let g = idx
            .iter()
            .flatten()
            .fold(0u64, |g, &(k, _)| gcd(g, (k - kmin) as u64))
            .max(1);
        let moves: Vec<Vec<(usize, f64)>> = idx
            .iter()
            .map(|m| {
                m.iter()
                    .map(|&(k, w)| (((k - kmin) as u64 / g) as usize, w))
                    .collect()
            })
            .collect();
        let span = moves.iter().flatten().map(|&(t, _)| t).max().unwrap_or(0);
        Ok(LatticeModel {
            base: f.lattice.point(kmin),
            unit: f.lattice.step * g as f64,
            span,
            moves,
        })
    }

    pub(crate) fn members(&self) -> usize {
        self.moves.len()
    }

    pub(crate) fn width(&self, k: usize) -> usize {
        k * self.span + 1
    }

    pub(crate) fn sum_value(&self, k: usize, t: usize) -> f64 {
        k as f64 * self.base + t as f64 * self.unit
    }

    /// Value of `S_k / k` at offset `t`; `k ≥ 1`.
    pub(crate) fn mean_value(&self, k: usize, t: usize) -> f64 {
        self.sum_value(k, t) / k as f64
    }

    pub(crate) fn offset_of(&self, k: usize, sum: f64) -> Option<usize> {
        let t = round((sum - k as f64 * self.base) / self.unit);
        if !(t >= 0.0) || t > (k * self.span) as f64 {
            return None;
        }
        let t = t as usize;
        let tol = ATOM_TOL * (1.0 + k as f64);
        if (self.sum_value(k, t) - sum).abs() <= tol {
            Some(t)
        } else {
            None
        }
    }

    /// Total dense states over steps `0..=n`.
    pub(crate) fn dense_states(&self, n: usize) -> u128 {
        let n = n as u128;
        (n + 1) + self.span as u128 * n * (n + 1) / 2
    }

    pub(crate) fn check_cap(&self, n: usize, opts: &EngineOptions) -> Result<(), EngineError> {
        let states = self.dense_states(n);
        if states > opts.state_cap as u128 {
            return Err(EngineError::SupportOverflow {
                states,
                cap: opts.state_cap,
            });
        }
        Ok(())
    }
}

/// Reachable partial sums `x_1 + ⋯ + x_k` for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumSupport {
    model: LatticeModel,
    reach: Vec<Vec<bool>>,
}

impl SumSupport {
    pub fn build(f: &AmbiguityFamily, n: usize, opts: &EngineOptions) -> Result<Self, EngineError> {
        let model = LatticeModel::new(f)?;
        model.check_cap(n, opts)?;
        Ok(Self::from_model(model, n))
    }

    pub(crate) fn from_model(model: LatticeModel, n: usize) -> Self {
        let mut offsets: Vec<usize> = model.moves.iter().flatten().map(|&(t, _)| t).collect();
        offsets.sort_unstable();
        offsets.dedup();
        let mut reach = Vec::with_capacity(n + 1);
        reach.push(vec![true]);
        for k in 0..n {
            let mut next = vec![false; model.width(k + 1)];
            for (t, &r) in reach[k].iter().enumerate() {
                if r {
                    for &d in &offsets {
                        next[t + d] = true;
                    }
                }
            }
            reach.push(next);
        }
        SumSupport { model, reach }
    }

    /// Number of steps `n`.
    pub fn steps(&self) -> usize {
        self.reach.len() - 1
    }

    pub(crate) fn model(&self) -> &LatticeModel {
        &self.model
    }

    /// Reachable offsets at step `k`, ascending.
    pub(crate) fn offsets(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.reach[k]
            .iter()
            .enumerate()
            .filter_map(|(t, &r)| r.then_some(t))
    }

    pub(crate) fn is_reachable(&self, k: usize, t: usize) -> bool {
        self.reach[k].get(t).copied().unwrap_or(false)
    }

    /// Reachable sums at step `k`, ascending.
    pub fn sums(&self, k: usize) -> Vec<f64> {
        self.offsets(k)
            .map(|t| self.model.sum_value(k, t))
            .collect()
    }

    pub fn len_at(&self, k: usize) -> usize {
        self.offsets(k).count()
    }

    pub fn total_states(&self) -> usize {
        (0..self.reach.len()).map(|k| self.len_at(k)).sum()
    }

    pub fn contains(&self, k: usize, sum: f64) -> bool {
        k < self.reach.len()
            && self
                .model
                .offset_of(k, sum)
                .is_some_and(|t| self.is_reachable(k, t))
    }
}

/// Backward values `v_k(s)` for every reachable `(k, s)`.
#[derive(Debug, Clone)]
pub struct ValueTable {
    support: SumSupport,
    /// Dense per step; `NaN` where unreachable.
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn build<F: Fn(f64) -> f64>(
        f: &AmbiguityFamily,
        n: usize,
        phi: F,
        opts: &EngineOptions,
    ) -> Result<Self, EngineError> {
        if n == 0 {
            return Err(EngineError::ZeroSteps);
        }
        let support = SumSupport::build(f, n, opts)?;
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        values.push(terminal_values(&support, &phi));
        for k in (0..n).rev() {
            let next = values.last().expect("terminal row");
            let (row, _) = backward_row(&support, k, next, false);
            values.push(row);
        }
        values.reverse();
        Ok(ValueTable { support, values })
    }

    pub fn support(&self) -> &SumSupport {
        &self.support
    }

    /// `v_k(sum)`, or `None` if `sum` is not reachable at step `k`.
    pub fn value(&self, k: usize, sum: f64) -> Option<f64> {
        let t = self.support.model.offset_of(k, sum)?;
        self.support
            .is_reachable(k, t)
            .then(|| self.values[k][t])
    }

    /// `(sum, v_k(sum))` over the reachable sums at step `k`.
    pub fn row(&self, k: usize) -> Vec<(f64, f64)> {
        self.support
            .offsets(k)
            .map(|t| (self.support.model.sum_value(k, t), self.values[k][t]))
            .collect()
    }

    pub fn root(&self) -> f64 {
        self.values[0][0]
    }
}

fn terminal_values<F: Fn(f64) -> f64>(support: &SumSupport, phi: &F) -> Vec<f64> {
    let n = support.steps();
    let model = support.model();
    let mut row = vec![f64::NAN; model.width(n)];
    for t in support.offsets(n) {
        row[t] = phi(model.mean_value(n, t));
    }
    row
}

/// One backward step. Members are scanned in index order and the first
/// maximum wins.
fn backward_row(
    support: &SumSupport,
    k: usize,
    next: &[f64],
    record: bool,
) -> (Vec<f64>, Vec<u32>) {
    let model = support.model();
    let mut row = vec![f64::NAN; model.width(k)];
    let mut choice = if record {
        vec![NO_CHOICE; model.width(k)]
    } else {
        Vec::new()
    };
    let mut member_values = vec![0.0; model.members()];
    for t in support.offsets(k) {
        for (j, mv) in model.moves.iter().enumerate() {
            member_values[j] = weighted_sum(mv.iter().map(|&(d, w)| w * next[t + d]));
        }
        let (best, v) = first_argmax(&member_values).expect("nonempty family");
        row[t] = v;
        if record {
            choice[t] = best as u32;
        }
    }
    (row, choice)
}

fn backward_root<F: Fn(f64) -> f64>(
    f: &AmbiguityFamily,
    n: usize,
    phi: F,
    opts: &EngineOptions,
    record: bool,
) -> Result<(f64, Option<SelectionPolicy>), EngineError> {
    if n == 0 {
        return Err(EngineError::ZeroSteps);
    }
    let support = SumSupport::build(f, n, opts)?;
    let mut next = terminal_values(&support, &phi);
    let mut choices = if record {
        vec![Vec::new(); n]
    } else {
        Vec::new()
    };
    for k in (0..n).rev() {
        let (row, choice) = backward_row(&support, k, &next, record);
        if record {
            choices[k] = choice;
        }
        next = row;
    }
    let policy = record.then(|| SelectionPolicy {
        model: support.model.clone(),
        choices,
    });
    Ok((next[0], policy))
}

/// `Ê[φ(S_n/n)]` by backward recursion over the reachable sums.
pub fn iid_sum_expectation<F: Fn(f64) -> f64>(
    f: &AmbiguityFamily,
    n: usize,
    phi: F,
    opts: &EngineOptions,
) -> Result<f64, EngineError> {
    backward_root(f, n, phi, opts, false).map(|(v, _)| v)
}

/// Lower expectation `−Ê[−φ(S_n/n)]`.
pub fn lower_iid_sum_expectation<F: Fn(f64) -> f64>(
    f: &AmbiguityFamily,
    n: usize,
    phi: F,
    opts: &EngineOptions,
) -> Result<f64, EngineError> {
    iid_sum_expectation(f, n, |x| -phi(x), opts).map(|v| -v)
}

/// The policy picking, at each reachable `(k, s)`, the lowest-index member
/// that attains the backward maximum.
pub fn extract_argmax_policy<F: Fn(f64) -> f64>(
    f: &AmbiguityFamily,
    n: usize,
    phi: F,
    opts: &EngineOptions,
) -> Result<SelectionPolicy, EngineError> {
    backward_root(f, n, phi, opts, true).map(|(_, p)| p.expect("recorded"))
}

const NO_CHOICE: u32 = u32::MAX;

/// Deterministic choice of family member for each `(step, running sum)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPolicy {
    model: LatticeModel,
    /// `choices[k][t]`: member drawn for `X_{k+1}` when `S_k` sits at offset `t`.
    choices: Vec<Vec<u32>>,
}

impl SelectionPolicy {
    /// Builds a policy from a rule over `(step, running sum)`. The rule is
    /// queried at every reachable state; returning `None` leaves the state
    /// unassigned.
    pub fn from_fn<R>(
        f: &AmbiguityFamily,
        n: usize,
        opts: &EngineOptions,
        mut rule: R,
    ) -> Result<Self, EngineError>
    where
        R: FnMut(usize, f64) -> Option<usize>,
    {
        let support = SumSupport::build(f, n, opts)?;
        let members = support.model.members();
        let mut choices = Vec::with_capacity(n);
        for k in 0..n {
            let mut row = vec![NO_CHOICE; support.model.width(k)];
            for t in support.offsets(k) {
                if let Some(j) = rule(k, support.model.sum_value(k, t)) {
                    if j < members {
                        row[t] = j as u32;
                    }
                }
            }
            choices.push(row);
        }
        Ok(SelectionPolicy {
            model: support.model,
            choices,
        })
    }

    pub fn constant(
        f: &AmbiguityFamily,
        n: usize,
        member: usize,
        opts: &EngineOptions,
    ) -> Result<Self, EngineError> {
        Self::from_fn(f, n, opts, |_, _| Some(member))
    }

    pub fn steps(&self) -> usize {
        self.choices.len()
    }

    /// Member selected for `X_{step+1}` given `S_step = sum`.
    pub fn select(&self, step: usize, sum: f64) -> Option<usize> {
        let t = self.model.offset_of(step, sum)?;
        self.select_offset(step, t)
    }

    fn select_offset(&self, step: usize, t: usize) -> Option<usize> {
        match *self.choices.get(step)?.get(t)? {
            NO_CHOICE => None,
            j => Some(j as usize),
        }
    }

    /// Distinct members used anywhere in the policy, ascending.
    pub fn members_used(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .choices
            .iter()
            .flatten()
            .filter(|&&c| c != NO_CHOICE)
            .map(|&c| c as usize)
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }
}

/// Mixture over family members for the draw of `X_{k+1}`, as a function of
/// the step `k` and the running sum `S_k`.
pub trait SumRule {
    /// Writes the mixture weights into `out` (one slot per member). Returns
    /// `false` when the rule has no selection at this state.
    fn mixture(&self, step: usize, sum: f64, out: &mut [f64]) -> bool;

    /// Fast path for rules that carry their own lattice geometry; `None`
    /// defers to [`SumRule::mixture`].
    #[doc(hidden)]
    fn mixture_at_offset(&self, _step: usize, _offset: usize, _out: &mut [f64]) -> Option<bool> {
        None
    }

    #[doc(hidden)]
    fn check_geometry(&self, _model: &LatticeModel, _n: usize) -> Result<(), EngineError> {
        Ok(())
    }
}

impl SumRule for SelectionPolicy {
    fn mixture(&self, step: usize, sum: f64, out: &mut [f64]) -> bool {
        match self.select(step, sum) {
            Some(j) => one_hot(out, j),
            None => false,
        }
    }

    fn mixture_at_offset(&self, step: usize, offset: usize, out: &mut [f64]) -> Option<bool> {
        Some(match self.select_offset(step, offset) {
            Some(j) => one_hot(out, j),
            None => false,
        })
    }

    fn check_geometry(&self, model: &LatticeModel, n: usize) -> Result<(), EngineError> {
        if &self.model != model || self.choices.len() < n {
            return Err(EngineError::PolicyMismatch);
        }
        Ok(())
    }
}

fn one_hot(out: &mut [f64], j: usize) -> bool {
    if j >= out.len() {
        return false;
    }
    out.fill(0.0);
    out[j] = 1.0;
    true
}

pub(crate) fn mixture_is_valid(w: &[f64]) -> bool {
    w.iter().all(|&x| x >= 0.0 && x.is_finite()) && (pairwise_sum(w) - 1.0).abs() <= ATOM_TOL
}

/// Terminal distribution of `S_n` under a sum-state rule, as
/// `(offset, probability)` over the reachable terminal sums.
pub(crate) fn forward_mass<R: SumRule + ?Sized>(
    support: &SumSupport,
    rule: &R,
) -> Result<Vec<f64>, EngineError> {
    let model = support.model();
    let n = support.steps();
    rule.check_geometry(model, n)?;
    let mut mass = vec![1.0];
    let mut w = vec![0.0; model.members()];
    for k in 0..n {
        let mut next = vec![0.0; model.width(k + 1)];
        for t in support.offsets(k) {
            let sum = model.sum_value(k, t);
            let ok = match rule.mixture_at_offset(k, t, &mut w) {
                Some(ok) => ok,
                None => rule.mixture(k, sum, &mut w),
            };
            if !ok {
                return Err(EngineError::PolicyIncomplete { step: k, sum });
            }
            if !mixture_is_valid(&w) {
                return Err(EngineError::InvalidMixture { step: k, sum });
            }
            let m = mass[t];
            for (j, mv) in model.moves.iter().enumerate() {
                if w[j] == 0.0 {
                    continue;
                }
                let mj = m * w[j];
                for &(d, p) in mv {
                    next[t + d] += mj * p;
                }
            }
        }
        mass = next;
    }
    Ok(mass)
}

/// Classical `E_P[φ(S_n/n)]` for the measure induced by a sum-state rule,
/// by forward propagation of probability mass.
pub fn expectation_under_policy<F, R>(
    f: &AmbiguityFamily,
    n: usize,
    phi: F,
    rule: &R,
    opts: &EngineOptions,
) -> Result<f64, EngineError>
where
    F: Fn(f64) -> f64,
    R: SumRule + ?Sized,
{
    if n == 0 {
        return Err(EngineError::ZeroSteps);
    }
    let support = SumSupport::build(f, n, opts)?;
    let mass = forward_mass(&support, rule)?;
    let model = support.model();
    let terms: Vec<f64> = support
        .offsets(n)
        .map(|t| mass[t] * phi(model.mean_value(n, t)))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `Ê[φ(X_1, …, X_n)]` by nested evaluation over the full history tree:
/// the innermost variable is integrated first with the history held fixed,
/// maximising over members at every node.
pub fn joint_expectation_bruteforce<F: Fn(&[f64]) -> f64>(
    f: &AmbiguityFamily,
    n: usize,
    phi: F,
    opts: &EngineOptions,
) -> Result<f64, EngineError> {
    validate_family(f)?;
    if n == 0 {
        return Err(EngineError::ZeroSteps);
    }
    let atoms = f.distinct_atoms();
    let d = atoms.len() as u128;
    let mut nodes: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=n {
        nodes = nodes.saturating_add(level);
        level = level.saturating_mul(d);
    }
    if nodes > opts.state_cap as u128 {
        return Err(EngineError::SupportOverflow {
            states: nodes,
            cap: opts.state_cap,
        });
    }
    // member atoms as indices into `atoms`
    let members: Vec<Vec<(usize, f64)>> = f
        .members
        .iter()
        .map(|m| {
            m.atoms
                .iter()
                .map(|a| {
                    let i = atoms
                        .iter()
                        .position(|&v| (v - a.value).abs() <= ATOM_TOL)
                        .expect("atom listed");
                    (i, a.weight)
                })
                .collect()
        })
        .collect();
    let mut history = Vec::with_capacity(n);
    Ok(nested_max(&atoms, &members, n, &phi, &mut history))
}

fn nested_max<F: Fn(&[f64]) -> f64>(
    atoms: &[f64],
    members: &[Vec<(usize, f64)>],
    n: usize,
    phi: &F,
    history: &mut Vec<f64>,
) -> f64 {
    if history.len() == n {
        return phi(history);
    }
    let child: Vec<f64> = atoms
        .iter()
        .map(|&a| {
            history.push(a);
            let v = nested_max(atoms, members, n, phi, history);
            history.pop();
            v
        })
        .collect();
    let per_member: Vec<f64> = members
        .iter()
        .map(|m| weighted_sum(m.iter().map(|&(i, w)| w * child[i])))
        .collect();
    first_argmax(&per_member).expect("nonempty family").1
}
