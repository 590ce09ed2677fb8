//! Exact evaluation of sublinear expectations generated by finite families of
//! lattice-supported distributions, together with the rate bounds for the
//! law of large numbers under such expectations.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function
//! over immutable inputs; file formats and the command line live in
//! `sublin-cli`.
//!
//! Module map:
//!
//! * [`ambiguity`]: families, validation, one-step operator and moments.
//! * [`engine`]: backward recursion for `Ê[φ(S_n/n)]`, policies, forward
//!   evaluation and the full-history brute force.
//! * [`lln_rates`]: limit `max φ` over the mean interval and the bounds.
//! * [`measures`]: explicit elements of the representing set, martingale
//!   decompositions, Chatterji and conditional-mean diagnostics, sampling.
//! * [`corpus`]: the built-in family and test-function corpus.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(a <= b)` comparisons deliberately treat NaN as a failure
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod ambiguity;
pub mod corpus;
pub mod engine;
pub mod lln_rates;
pub mod measures;
mod numeric;

pub use ambiguity::{
    mean_bounds, moment_c_alpha, moment_summary, one_step_expectation, upper_variance,
    validate_family, AmbiguityFamily, Atom, DiscreteDistribution, FamilyError, LatticeSpec,
    MomentSummary, ValidationReport,
};
pub use engine::{
    expectation_under_policy, extract_argmax_policy, iid_sum_expectation,
    joint_expectation_bruteforce, lower_iid_sum_expectation, EngineError, EngineOptions,
    SelectionPolicy, SumRule, SumSupport, ValueTable,
};
pub use lln_rates::{
    corollary_bound, distance_sq_moment, fang_bound, improved_distance_bound, interval_max,
    rate_sweep, theorem3_bound, BoundCheck, IntervalMaxResult, LipschitzFunction, RateError,
    RateReport,
};
pub use measures::{
    chatterji_check, conditional_means, construct_pstar, lower_bound_check, prop2_check,
    sample_paths, ChatterjiReport, LowerBoundReport, MartingaleDecomposition, MeasureError,
    PStar, PathMeasure, Prop2Report, SampleSet,
};
