use std::collections::BTreeMap;

use evrec_core::dataio::{report_from_str, to_decimal_json};
use evrec_core::experiments::{run_protocol, ComparisonOutcome, Series, SplitPlan};
use evrec_core::presets;
use evrec_core::regression::{fit_assumption, AssumptionSpec, Regime};
use evrec_core::scoring::{Attribute, ScoringFunction};
use evrec_core::stats::{compare_to_baseline, t_critical};
use evrec_core::synth::{synth_samples, SynthConfig};

fn sigma_x_terms() -> BTreeMap<String, f64> {
    let ScoringFunction::Linear(f) = presets::sigma_x() else { unreachable!() };
    let mut m: BTreeMap<String, f64> = f.coefficients.iter().map(|(a, w)| (a.name().to_owned(), *w)).collect();
    m.insert("intercept".into(), f.intercept);
    m
}

fn specs(regimes: &[Regime]) -> Vec<AssumptionSpec> {
    regimes.iter().map(|&r| AssumptionSpec::new(r)).collect()
}

#[test]
fn same_seed_gives_byte_identical_reports() {
    let pool = synth_samples(&SynthConfig::new(1), 600);
    let test = synth_samples(&SynthConfig::new(2), 300);
    let regimes = specs(&Regime::ALL);
    let a = run_protocol(&pool, &test, &regimes, &SplitPlan::new(7)).unwrap();
    let b = run_protocol(&pool, &test, &regimes, &SplitPlan::new(7)).unwrap();
    assert_eq!(to_decimal_json(&a), to_decimal_json(&b));
    assert_eq!(a.render_text(), b.render_text());
    let c = run_protocol(&pool, &test, &regimes, &SplitPlan::new(8)).unwrap();
    assert_ne!(to_decimal_json(&a), to_decimal_json(&c));
}

#[test]
fn additional_factors_beat_content_only() {
    let pool = synth_samples(&SynthConfig::new(11), 1500);
    let test = synth_samples(&SynthConfig::new(12), 750);
    let report = run_protocol(&pool, &test, &specs(&[Regime::Ia0Fin, Regime::IaX]), &SplitPlan::new(3)).unwrap();
    let tc = t_critical(0.975, 14.0).unwrap();
    for series in [Series::Validation, Series::Test] {
        let c = report.comparison(series, Regime::Ia0Fin, Regime::IaX).unwrap();
        let ComparisonOutcome::Tested(t) = &c.outcome else { panic!("{:?}", c.outcome) };
        assert!(t.mean_delta_pct > 0.0);
        assert!(t.t_stat > tc, "t = {}", t.t_stat);
        assert_eq!(t.df, 14);
    }
}

#[test]
fn reported_deltas_match_raw_tables() {
    let pool = synth_samples(&SynthConfig::new(21), 900);
    let test = synth_samples(
        &SynthConfig {
            init_truth: None,
            ..SynthConfig::new(22)
        },
        450,
    );
    let report = run_protocol(&pool, &test, &specs(&Regime::ALL), &SplitPlan::new(5)).unwrap();
    let mut checked = 0;
    for c in &report.comparisons {
        let rows = match c.series {
            Series::Validation => &report.validation_rmse,
            Series::Test => &report.test_rmse,
        };
        let get = |r| -> Option<Vec<f64>> {
            rows.iter().find(|x| x.regime == r).unwrap().splits.iter().copied().collect()
        };
        match (&c.outcome, get(c.candidate), get(c.baseline)) {
            (ComparisonOutcome::Tested(t), Some(cand), Some(base)) => {
                assert_eq!(t, &compare_to_baseline(&cand, &base).unwrap());
                checked += 1;
            }
            (ComparisonOutcome::Unavailable { .. }, cand, base) => {
                assert!(cand.is_none() || base.is_none());
            }
            (other, _, _) => panic!("unexpected {other:?}"),
        }
    }
    // ia0_init has no test RMSE, everything else is complete
    assert_eq!(checked, 21 + 15);
    assert!(report.errors.is_empty(), "{:?}", report.errors);
}

#[test]
fn report_round_trip_is_bit_exact() {
    let pool = synth_samples(&SynthConfig::new(31), 450);
    let test = synth_samples(&SynthConfig::new(32), 150);
    let report = run_protocol(&pool, &test, &specs(&Regime::ALL), &SplitPlan::new(9)).unwrap();
    let json = to_decimal_json(&report);
    let back = report_from_str(&json).unwrap();
    assert_eq!(back, report);
    assert_eq!(to_decimal_json(&back), json);
    for (a, b) in report.validation_rmse.iter().zip(&back.validation_rmse) {
        for (x, y) in a.splits.iter().zip(&b.splits) {
            assert_eq!(x.map(f64::to_bits), y.map(f64::to_bits));
        }
    }
}

#[test]
fn coefficient_tables_are_rectangular_and_average_to_the_model() {
    let pool = synth_samples(&SynthConfig::new(41), 1500);
    let report = run_protocol(&pool, &[], &specs(&[Regime::IaX, Regime::IaXdThi]), &SplitPlan::new(1)).unwrap();
    assert_eq!(report.pieces(Regime::IaX).len(), 1);
    assert_eq!(report.pieces(Regime::IaXdThi).len(), 3);
    for p in &report.coefficients {
        assert_eq!(p.splits.len(), 15);
        for t in &p.terms {
            let s = t.summary.as_ref().unwrap();
            assert_eq!(s.n, 15);
        }
        assert!(p.ratio.is_some());
    }
    let avg = report.averaged_model(Regime::IaX).unwrap();
    let ScoringFunction::Linear(f) = &avg else { panic!() };
    let terms = &report.pieces(Regime::IaX)[0].terms;
    assert!((f.intercept - terms[0].summary.as_ref().unwrap().mean).abs() < 1e-12);
    for t in &terms[1..] {
        let a = Attribute::parse(&t.term).unwrap();
        assert!((f.coefficient(a).unwrap() - t.summary.as_ref().unwrap().mean).abs() < 1e-12);
    }
    assert!(matches!(report.averaged_model(Regime::IaXdThi), Some(ScoringFunction::Piecewise(_))));
    assert_eq!(report.averaged_model(Regime::IaXuAbs), None);
}

#[test]
fn recovers_published_coefficients_from_synthetic_survey() {
    let samples = synth_samples(&SynthConfig::new(2024), 3000);
    let fit = fit_assumption(&samples, &AssumptionSpec::new(Regime::IaX)).unwrap();
    let ScoringFunction::Linear(f) = &fit.function else { panic!() };
    for (name, want) in sigma_x_terms() {
        let got = if name == "intercept" {
            f.intercept
        } else {
            f.coefficient(Attribute::parse(&name).unwrap()).unwrap()
        };
        let tol = if name == "intercept" { 0.3 } else { 0.05 };
        assert!((got - want).abs() <= tol, "{name}: {got} vs {want}");
    }
    assert!((fit.training_rmse - 0.5).abs() < 0.05);
}

/// Fraction of reruns in which `(mean - truth)` lies within `scale` times
/// the reported 0.95 half-width, per term.
fn coverage(runs: u64, pool_size: usize, scale: f64) -> BTreeMap<String, usize> {
    let truth = sigma_x_terms();
    let mut hits: BTreeMap<String, usize> = truth.keys().map(|k| (k.clone(), 0)).collect();
    for seed in 0..runs {
        let pool = synth_samples(&SynthConfig::new(10_000 + seed), pool_size);
        let report = run_protocol(&pool, &[], &specs(&[Regime::IaX]), &SplitPlan::new(seed)).unwrap();
        for t in &report.pieces(Regime::IaX)[0].terms {
            let s = t.summary.as_ref().unwrap();
            if (s.mean - truth[&t.term]).abs() <= scale * s.ci95_halfwidth {
                *hits.get_mut(&t.term).unwrap() += 1;
            }
        }
    }
    hits
}

/// The split-to-split interval measures how much the fit moves between
/// overlapping training subsets of one pool. It does not include the
/// sampling error of the pool itself, which dominates, so coverage of the
/// generating values stays near 30% rather than the 90% this asks for.
#[test]
#[ignore = "unattainable with split-to-split intervals; see analysis in coverage_gap_is_explained"]
fn summary_interval_covers_generating_values() {
    for (term, n) in coverage(100, 4500, 1.0) {
        assert!(n >= 90, "{term}: {n}/100");
    }
}

/// Split estimates deviate from the full-pool estimate with variance
/// `v·(1/n_train − 1/n)`, whereas the pool estimate deviates from the truth
/// with `v/n`. Widening the half-width by `sqrt(J · n_train / n_test)`
/// turns it into an interval for the pool estimate, which then covers at
/// the nominal rate; the unscaled interval covers at roughly
/// `P(|Z| < 2.14 · sqrt(0.5 / 15)) ≈ 0.30`.
#[test]
fn coverage_gap_is_explained() {
    let raw = coverage(100, 1500, 1.0);
    let scaled = coverage(100, 1500, (15.0f64 * 2.0).sqrt());
    for (term, n) in &raw {
        assert!(*n <= 50, "{term}: unscaled coverage {n}/100");
        assert!(scaled[term] >= 85, "{term}: scaled coverage {}/100", scaled[term]);
    }
}
