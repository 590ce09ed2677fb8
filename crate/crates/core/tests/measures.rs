use sublin_core::ambiguity::{mean_bounds, moment_summary};
use sublin_core::corpus;
use sublin_core::engine::{expectation_under_policy, EngineOptions};
use sublin_core::lln_rates::{catalog_for, theorem3_bound, LipschitzFunction};
use sublin_core::measures::*;

const PS: [f64; 5] = [1.0, 1.25, 1.5, 1.75, 2.0];

#[test]
fn enumerated_measures_satisfy_all_diagnostics() {
    let opts = MeasureOptions::default();
    for (name, f) in corpus::families() {
        for n in 1..=6 {
            for m in measure_corpus(&f, n, &opts.engine).unwrap() {
                let d = conditional_means(&f, &m, n, &opts).unwrap();
                let tag = format!("{name} {} n={n}", m.name());
                assert!((d.total_probability() - 1.0).abs() <= 1e-12, "{tag}");
                assert!(d.martingale_residual() <= 1e-12, "{tag}");
                assert!(d.martingale_event_residual() <= 1e-12, "{tag}");
                let p2 = prop2_check(&f, &m, n, &opts).unwrap();
                assert!(p2.holds, "{tag}: {p2:?}");
                let vd = variance_domination(&f, &d);
                assert!(vd.holds, "{tag}: {vd:?}");
                for p in PS {
                    let c = chatterji_check(&f, &m, n, p, &opts).unwrap();
                    assert!(c.holds && c.chain_holds, "{tag} p={p}: {c:?}");
                }
            }
        }
    }
}

#[test]
fn pstar_pins_every_step_mean() {
    let opts = MeasureOptions::default();
    for (name, f) in corpus::families() {
        let (lo, hi) = mean_bounds(&f).unwrap();
        for t in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let mu = lo + t * (hi - lo);
            let ps = construct_pstar(&f, mu, 5).unwrap();
            assert!((ps.step_mean(&f) - mu).abs() <= 1e-12, "{name}");
            let d = conditional_means(&f, &ps.measure, 5, &opts).unwrap();
            for i in 0..5 {
                assert!((d.step_mean(i) - mu).abs() <= 1e-12, "{name} step {i}");
                assert!(d.cond_means[i].iter().all(|c| (c - mu).abs() <= 1e-12));
            }
            // E[S_k / k] through the forward recursion
            for k in [1, 10, 100] {
                let e = expectation_under_policy(&f, k, |x| x, &ps.measure, &opts.engine).unwrap();
                assert!((e - mu).abs() <= 1e-12, "{name} k={k}: {e} vs {mu}");
            }
        }
    }
}

#[test]
fn lower_half_chain_holds_on_corpus() {
    let opts = MeasureOptions::default();
    let alphas = [0.25, 0.5, 0.75, 1.0];
    for (name, f) in corpus::families() {
        for phi in catalog_for(&f).unwrap() {
            for n in [1, 3, 16, 100] {
                let r = lower_bound_check(&f, &phi, n, &alphas, &opts).unwrap();
                assert!(r.holds(), "{name} {} n={n}: {r:?}", phi.name());
                let c = moment_summary(&f, &[1.0]).unwrap().c_alpha(1.0).unwrap();
                assert_eq!(r.bounds[3].1, theorem3_bound(phi.lipschitz(), c, 1.0, n).unwrap());
            }
        }
    }
}

#[test]
fn monte_carlo_agrees_with_forward_recursion() {
    let (_, f) = corpus::families()
        .into_iter()
        .find(|(n, _)| *n == "skewed_three")
        .unwrap();
    let (lo, hi) = mean_bounds(&f).unwrap();
    let ps = construct_pstar(&f, 0.5 * (lo + hi), 50).unwrap();
    let phi = LipschitzFunction::abs_dev(0.3);
    let exact = expectation_under_policy(&f, 50, |x| phi.eval(x), &ps.measure, &EngineOptions::default())
        .unwrap();
    let s = sample_paths(&f, &ps.measure, 50, 20_000, 7).unwrap();
    let est = s.estimate(|x| phi.eval(x));
    assert!((est.mean - exact).abs() <= 4.0 * est.standard_error(), "{est:?} vs {exact}");
    let again = sample_paths(&f, &ps.measure, 50, 20_000, 7).unwrap().estimate(|x| phi.eval(x));
    assert_eq!(est.mean.to_bits(), again.mean.to_bits());
}

#[test]
fn history_rule_sampling_follows_its_rule() {
    let (_, f) = corpus::families()
        .into_iter()
        .find(|(n, _)| *n == "two_coins")
        .unwrap();
    // member 1 always after a 2, member 0 otherwise
    let m = PathMeasure::history("after_two", |_, h: &[f64]| match h.last() {
        Some(&x) if x > 1.0 => vec![0.0, 1.0],
        _ => vec![1.0, 0.0],
    });
    let exact = m.expectation(&f, 6, |x| x, &MeasureOptions::default()).unwrap();
    let est = sample_paths(&f, &m, 6, 40_000, 3).unwrap().estimate(|x| x);
    assert!((est.mean - exact).abs() <= 4.0 * est.standard_error());
}
