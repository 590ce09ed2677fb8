//! Executes checks against the core library and collects report tables.
//!
//! Column order per check (`[α]` columns repeat for every configured α in
//! order):
//!
//! | check | columns |
//! |---|---|
//! | eval | family, phi, lipschitz, n, upper, lower, pass |
//! | sweep | family, phi, lipschitz, n, expectation, limit, limit_error, gap, bound_theorem3[α], holds_theorem3[α], bound_corollary, holds_corollary, pass |
//! | variance | family, n, mu_lower, mu_upper, sigma_bar_sq, sigma_bar_argmin, c_alpha[α], distance_moment, improved_bound, fang_bound, holds_improved, improved_le_fang, pass |
//! | chatterji | family, measure, n, p, lhs, difference_moment_sum, rhs, holds, chain_middle, chain_bound, chain_holds, pass |
//! | prop2 | family, measure, n, mu_lower, mu_upper, min_cond_mean, max_cond_mean, worst_violation, holds, martingale_residual, martingale_holds, max_conditional_variance, sigma_bar_sq, variance_holds, pass |
//! | pstar | family, phi, n, mu_star, step_mean_error, phi_mu_star, pstar_expectation, sublinear_expectation, deficit, dominance_holds, bound_theorem3[α], holds_theorem3[α], pass |
//! | mc | family, phi, n, samples, seed, exact, mean, std, standard_error, holds, reproducible, pass |
//!
//! `bound_corollary` and `holds_corollary` are empty when `L_φ > 1`.

use std::fmt::Display;

use sublin_core::ambiguity::{moment_summary, AmbiguityFamily};
use sublin_core::engine::{expectation_under_policy, iid_sum_expectation, lower_iid_sum_expectation, EngineOptions};
use sublin_core::lln_rates::{
    distance_sq_moment, fang_bound, improved_distance_bound, interval_max, rate_sweep, LipschitzFunction,
    BOUND_TOL,
};
use sublin_core::measures::{
    conditional_means, construct_pstar, lower_bound_check, measure_corpus, sample_paths, variance_domination, SampleSet,
    MeasureOptions, ENUM_TOL,
};
use sublin_core::{chatterji_check, prop2_check};
use thiserror::Error;

use crate::config::{Check, ExperimentConfig};
use crate::report::{indexed, Cell, Table};

#[derive(Debug, Error)]
#[error("check '{check}' failed on {context}: {message}")]
pub struct CheckError {
    pub check: &'static str,
    pub context: String,
    pub message: String,
}

fn fail<E: Display>(check: Check, context: impl Into<String>) -> impl FnOnce(E) -> CheckError {
    move |e| CheckError {
        check: check.name(),
        context: context.into(),
        message: e.to_string(),
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn columns(check: Check, cfg: &ExperimentConfig) -> Vec<String> {
    let per_alpha = |bases: &[&str]| -> Vec<String> {
        bases
            .iter()
            .flat_map(|b| cfg.alphas.iter().map(move |&a| indexed(b, a)))
            .collect()
    };
    let mut c = match check {
        Check::Eval => names(&["family", "phi", "lipschitz", "n", "upper", "lower"]),
        Check::Sweep => {
            let mut c = names(&["family", "phi", "lipschitz", "n", "expectation", "limit", "limit_error", "gap"]);
            c.extend(per_alpha(&["bound_theorem3", "holds_theorem3"]));
            c.extend(names(&["bound_corollary", "holds_corollary"]));
            c
        }
        Check::Variance => {
            let mut c = names(&["family", "n", "mu_lower", "mu_upper", "sigma_bar_sq", "sigma_bar_argmin"]);
            c.extend(per_alpha(&["c_alpha"]));
            c.extend(names(&[
                "distance_moment",
                "improved_bound",
                "fang_bound",
                "holds_improved",
                "improved_le_fang",
            ]));
            c
        }
        Check::Chatterji => names(&[
            "family",
            "measure",
            "n",
            "p",
            "lhs",
            "difference_moment_sum",
            "rhs",
            "holds",
            "chain_middle",
            "chain_bound",
            "chain_holds",
        ]),
        Check::Prop2 => names(&[
            "family",
            "measure",
            "n",
            "mu_lower",
            "mu_upper",
            "min_cond_mean",
            "max_cond_mean",
            "worst_violation",
            "holds",
            "martingale_residual",
            "martingale_holds",
            "max_conditional_variance",
            "sigma_bar_sq",
            "variance_holds",
        ]),
        Check::Pstar => {
            let mut c = names(&[
                "family",
                "phi",
                "n",
                "mu_star",
                "step_mean_error",
                "phi_mu_star",
                "pstar_expectation",
                "sublinear_expectation",
                "deficit",
                "dominance_holds",
            ]);
            c.extend(per_alpha(&["bound_theorem3", "holds_theorem3"]));
            c
        }
        Check::Mc => names(&[
            "family",
            "phi",
            "n",
            "samples",
            "seed",
            "exact",
            "mean",
            "std",
            "standard_error",
            "holds",
            "reproducible",
        ]),
    };
    c.push("pass".into());
    c
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    engine: EngineOptions,
    measures: MeasureOptions,
}

impl Ctx<'_> {
    fn pairs(&self) -> Vec<(&str, &AmbiguityFamily, LipschitzFunction)> {
        let mut out = Vec::new();
        for f in &self.cfg.families {
            for p in &self.cfg.phis {
                for g in p.instantiate(&f.family) {
                    out.push((f.name.as_str(), &f.family, g));
                }
            }
        }
        out
    }
}

pub fn run_check(check: Check, cfg: &ExperimentConfig) -> Result<Table, CheckError> {
    let engine = EngineOptions {
        state_cap: cfg.state_cap,
    };
    let ctx = Ctx {
        cfg,
        engine,
        measures: MeasureOptions {
            engine,
            max_enumeration_steps: cfg.enumeration_max_n,
        },
    };
    let mut t = Table::new(check.name(), columns(check, cfg));
    match check {
        Check::Eval => eval(&ctx, &mut t)?,
        Check::Sweep => sweep(&ctx, &mut t)?,
        Check::Variance => variance(&ctx, &mut t)?,
        Check::Chatterji => chatterji(&ctx, &mut t)?,
        Check::Prop2 => prop2(&ctx, &mut t)?,
        Check::Pstar => pstar(&ctx, &mut t)?,
        Check::Mc => mc(&ctx, &mut t)?,
    }
    Ok(t)
}

fn eval(ctx: &Ctx, t: &mut Table) -> Result<(), CheckError> {
    for (fam, f, g) in ctx.pairs() {
        for &n in &ctx.cfg.n_schedule {
            let at = || format!("family '{fam}', phi '{}', n = {n}", g.name());
            let upper = iid_sum_expectation(f, n, |x| g.eval(x), &ctx.engine).map_err(fail(Check::Eval, at()))?;
            let lower =
                lower_iid_sum_expectation(f, n, |x| g.eval(x), &ctx.engine).map_err(fail(Check::Eval, at()))?;
            t.push(vec![
                fam.into(),
                g.name().into(),
                g.lipschitz().into(),
                n.into(),
                upper.into(),
                lower.into(),
                (lower <= upper + ENUM_TOL).into(),
            ]);
        }
    }
    Ok(())
}

fn sweep(ctx: &Ctx, t: &mut Table) -> Result<(), CheckError> {
    for (fam, f, g) in ctx.pairs() {
        let rows = rate_sweep(f, &g, &ctx.cfg.n_schedule, &ctx.cfg.alphas, &ctx.engine)
            .map_err(fail(Check::Sweep, format!("family '{fam}', phi '{}'", g.name())))?;
        for r in rows {
            let mut row: Vec<Cell> = vec![
                fam.into(),
                g.name().into(),
                g.lipschitz().into(),
                r.n.into(),
                r.expectation.into(),
                r.limit.into(),
                r.limit_error.into(),
                r.gap.into(),
            ];
            row.extend(r.theorem3.iter().map(|(_, b)| Cell::from(b.bound)));
            row.extend(r.theorem3.iter().map(|(_, b)| Cell::from(b.holds)));
            row.push(r.corollary.map(|b| b.bound).into());
            row.push(r.corollary.map(|b| b.holds).into());
            row.push(r.bounds_hold().into());
            t.push(row);
        }
    }
    Ok(())
}

fn variance(ctx: &Ctx, t: &mut Table) -> Result<(), CheckError> {
    for fs in &ctx.cfg.families {
        let (fam, f) = (fs.name.as_str(), &fs.family);
        let s = moment_summary(f, &ctx.cfg.alphas).map_err(fail(Check::Variance, format!("family '{fam}'")))?;
        for &n in &ctx.cfg.n_schedule {
            let at = format!("family '{fam}', n = {n}");
            let d = distance_sq_moment(f, n, &ctx.engine).map_err(fail(Check::Variance, at.clone()))?;
            let improved = improved_distance_bound(s.sigma_bar_sq, n).map_err(fail(Check::Variance, at.clone()))?;
            let fang = fang_bound(s.sigma_bar_sq, s.spread(), n).map_err(fail(Check::Variance, at))?;
            let holds = d.value <= improved + BOUND_TOL;
            let le = improved <= fang + BOUND_TOL;
            let mut row: Vec<Cell> = vec![
                fam.into(),
                n.into(),
                s.mu_lower.into(),
                s.mu_upper.into(),
                s.sigma_bar_sq.into(),
                s.sigma_bar_argmin.into(),
            ];
            row.extend(s.c_alpha.iter().map(|&(_, c)| Cell::from(c)));
            row.extend([
                d.value.into(),
                improved.into(),
                fang.into(),
                holds.into(),
                le.into(),
                (holds && le).into(),
            ]);
            t.push(row);
        }
    }
    Ok(())
}

fn enumeration_horizons(ctx: &Ctx) -> std::ops::RangeInclusive<usize> {
    1..=ctx.cfg.enumeration_max_n
}

fn chatterji(ctx: &Ctx, t: &mut Table) -> Result<(), CheckError> {
    for fs in &ctx.cfg.families {
        let (fam, f) = (fs.name.as_str(), &fs.family);
        for n in enumeration_horizons(ctx) {
            let ms = measure_corpus(f, n, &ctx.engine)
                .map_err(fail(Check::Chatterji, format!("family '{fam}', n = {n}")))?;
            for m in ms {
                for &p in &ctx.cfg.chatterji_p {
                    let r = chatterji_check(f, &m, n, p, &ctx.measures).map_err(fail(
                        Check::Chatterji,
                        format!("family '{fam}', measure '{}', n = {n}, p = {p}", m.name()),
                    ))?;
                    t.push(vec![
                        fam.into(),
                        m.name().into(),
                        n.into(),
                        p.into(),
                        r.lhs.into(),
                        r.difference_moment_sum.into(),
                        r.rhs.into(),
                        r.holds.into(),
                        r.chain_middle.into(),
                        r.chain_bound.into(),
                        r.chain_holds.into(),
                        (r.holds && r.chain_holds).into(),
                    ]);
                }
            }
        }
    }
    Ok(())
}

fn prop2(ctx: &Ctx, t: &mut Table) -> Result<(), CheckError> {
    for fs in &ctx.cfg.families {
        let (fam, f) = (fs.name.as_str(), &fs.family);
        for n in enumeration_horizons(ctx) {
            let ms = measure_corpus(f, n, &ctx.engine)
                .map_err(fail(Check::Prop2, format!("family '{fam}', n = {n}")))?;
            for m in ms {
                let at = format!("family '{fam}', measure '{}', n = {n}", m.name());
                let r = prop2_check(f, &m, n, &ctx.measures).map_err(fail(Check::Prop2, at.clone()))?;
                let d = conditional_means(f, &m, n, &ctx.measures).map_err(fail(Check::Prop2, at))?;
                let residual = d.martingale_residual().max(d.martingale_event_residual());
                let mart = residual <= ENUM_TOL;
                let v = variance_domination(f, &d);
                t.push(vec![
                    fam.into(),
                    m.name().into(),
                    n.into(),
                    r.mu_lower.into(),
                    r.mu_upper.into(),
                    r.min_cond_mean.into(),
                    r.max_cond_mean.into(),
                    r.worst_violation.into(),
                    r.holds.into(),
                    residual.into(),
                    mart.into(),
                    v.max_conditional_variance.into(),
                    v.sigma_bar_sq.into(),
                    v.holds.into(),
                    (r.holds && mart && v.holds).into(),
                ]);
            }
        }
    }
    Ok(())
}

fn pstar(ctx: &Ctx, t: &mut Table) -> Result<(), CheckError> {
    for (fam, f, g) in ctx.pairs() {
        for &n in &ctx.cfg.n_schedule {
            let at = || format!("family '{fam}', phi '{}', n = {n}", g.name());
            let r = lower_bound_check(f, &g, n, &ctx.cfg.alphas, &ctx.measures).map_err(fail(Check::Pstar, at()))?;
            let ps = construct_pstar(f, r.mu_star, n).map_err(fail(Check::Pstar, at()))?;
            let step_err = (ps.step_mean(f) - r.mu_star).abs();
            let pinned = step_err <= ENUM_TOL;
            let mut row: Vec<Cell> = vec![
                fam.into(),
                g.name().into(),
                n.into(),
                r.mu_star.into(),
                step_err.into(),
                r.phi_mu_star.into(),
                r.pstar_expectation.into(),
                r.sublinear_expectation.into(),
                r.deficit().into(),
                r.dominance_holds.into(),
            ];
            row.extend(r.bounds.iter().map(|b| Cell::from(b.1)));
            row.extend(r.bounds.iter().map(|b| Cell::from(b.2)));
            row.push((r.holds() && pinned).into());
            t.push(row);
        }
    }
    Ok(())
}

fn mc(ctx: &Ctx, t: &mut Table) -> Result<(), CheckError> {
    let (n, count, seed) = (ctx.cfg.mc_n, ctx.cfg.mc_samples, ctx.cfg.seed);
    // test functions sharing a family and μ* share one sample set
    let mut cache: Vec<(&str, u64, SampleSet, bool)> = Vec::new();
    for (fam, f, g) in ctx.pairs() {
        let at = || format!("family '{fam}', phi '{}'", g.name());
        let (lo, hi) = sublin_core::mean_bounds(f).map_err(fail(Check::Mc, at()))?;
        let top = interval_max(&g, lo, hi).map_err(fail(Check::Mc, at()))?;
        let ps = construct_pstar(f, top.argmax_r, n).map_err(fail(Check::Mc, at()))?;
        let exact = expectation_under_policy(f, n, |x| g.eval(x), &ps.measure, &ctx.engine)
            .map_err(fail(Check::Mc, at()))?;
        let key = top.argmax_r.to_bits();
        let i = match cache.iter().position(|c| c.0 == fam && c.1 == key) {
            Some(i) => i,
            None => {
                let a = sample_paths(f, &ps.measure, n, count, seed).map_err(fail(Check::Mc, at()))?;
                let b = sample_paths(f, &ps.measure, n, count, seed).map_err(fail(Check::Mc, at()))?;
                let same = a.atoms.iter().map(|x| x.to_bits()).eq(b.atoms.iter().map(|x| x.to_bits()));
                cache.push((fam, key, a, same));
                cache.len() - 1
            }
        };
        let est = cache[i].2.estimate(|x| g.eval(x));
        let same = cache[i].3;
        let se = est.standard_error();
        let holds = (est.mean - exact).abs() <= 4.0 * se;
        t.push(vec![
            fam.into(),
            g.name().into(),
            n.into(),
            count.into(),
            seed.into(),
            exact.into(),
            est.mean.into(),
            est.std.into(),
            se.into(),
            holds.into(),
            same.into(),
            (holds && same).into(),
        ]);
    }
    Ok(())
}
