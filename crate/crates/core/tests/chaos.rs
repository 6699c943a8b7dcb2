mod common;

use mvlab::chaos::{
    fit_loglog_slope, phi_rate, run_moment_experiment, run_strong_poc, run_weak_poc, DistanceMode,
    MomentConfig, PoCConfig, Verdict,
};
use mvlab::model::{Frozen, Initial, LinearMeanField};
use mvlab::{Error, Exec};
use proptest::prelude::*;

fn small_cfg(model: &str) -> PoCConfig {
    let mut cfg = PoCConfig::new(model, 1.0, vec![4, 8, 16], 4, 5);
    cfg.horizon = 0.2;
    cfg.step = 0.05;
    cfg.exec = Exec::Sequential;
    cfg
}

fn normal(d: usize) -> Initial {
    Initial::Normal {
        mean: vec![0.5; d],
        sd: 1.0,
    }
}

#[test]
fn exact_power_law_is_recovered() {
    let pts: Vec<_> = [10.0, 20.0, 40.0, 80.0]
        .iter()
        .map(|&n: &f64| (n, 3.0 * n.powf(-0.37), 0.0))
        .collect();
    let fit = fit_loglog_slope(&pts).unwrap();
    assert!((fit.slope + 0.37).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
    assert!(fit.slope_se < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slope_ignores_scale_of_estimates_and_n(
        est in prop::collection::vec(0.01f64..10.0, 5),
        rel in prop::collection::vec(0.01f64..0.3, 5),
        c in 0.01f64..100.0,
        k in 0.5f64..8.0,
    ) {
        let ns = [16.0, 32.0, 64.0, 128.0, 256.0];
        let base: Vec<_> = (0..5).map(|i| (ns[i], est[i], rel[i] * est[i])).collect();
        let scaled: Vec<_> = base.iter().map(|&(n, e, s)| (n * k, e * c, s * c)).collect();
        let a = fit_loglog_slope(&base).unwrap();
        let b = fit_loglog_slope(&scaled).unwrap();
        prop_assert!((a.slope - b.slope).abs() < 1e-9);
        prop_assert!((a.slope_se - b.slope_se).abs() < 1e-9);
    }

    #[test]
    fn phi_is_the_slower_of_two_rates(p in 1.0f64..2.0, beta in 1.0f64..=2.0, d in 1usize..9) {
        prop_assume!(p < beta);
        let e = phi_rate(p, beta, d).unwrap();
        let first = -(1.0 - p / beta);
        let second = -p / d as f64;
        let expect = if d <= 2 { first } else { first.max(second) };
        prop_assert!((e - expect).abs() < 1e-12, "{} vs {}", e, expect);
        prop_assert!((-0.5..0.0).contains(&e));
    }
}

#[test]
fn fit_rejects_degenerate_input() {
    assert!(fit_loglog_slope(&[(1.0, 1.0, 0.1), (2.0, 0.5, 0.1)]).is_err());
    assert!(fit_loglog_slope(&[(1.0, 1.0, 0.1), (2.0, 0.0, 0.1), (4.0, 0.2, 0.1)]).is_err());
    assert!(fit_loglog_slope(&[(4.0, 1.0, 0.1), (4.0, 0.5, 0.1), (4.0, 0.2, 0.1)]).is_err());
}

#[test]
fn config_validation_collects_every_problem() {
    let mut cfg = PoCConfig::new("m", 2.5, vec![8, 4], 1, 0);
    cfg.q1 = 0.95;
    cfg.step = -1.0;
    cfg.distance = DistanceMode::Sliced { projections: 0 };
    let Err(Error::Config(msg)) = cfg.validate(2.0) else {
        panic!("expected config error");
    };
    for needle in [
        "p < beta",
        "q1 < q2",
        "at least 3",
        "strictly increasing",
        "2 replications",
        "step",
        "projection",
    ] {
        assert!(msg.contains(needle), "missing `{needle}` in {msg}");
    }
}

#[test]
fn measure_free_model_has_no_interaction_error() {
    let c = Frozen::new(1, 2.0)
        .unwrap()
        .drift(0.2, -1.0, 0.0)
        .jumps(0.5, 0.5);
    let levy = common::levy(1, 2.0, 1.0);
    let report = run_weak_poc(&c, &normal(1), &levy, &small_cfg("frozen")).unwrap();
    for pt in &report.points {
        let inter = pt.interaction.unwrap();
        assert_eq!(inter.mean, 0.0, "n = {}", pt.n);
        assert!(pt.sampling.unwrap().mean > 0.0);
        assert_eq!(pt.estimate, pt.sampling.unwrap().mean);
    }
}

#[test]
fn strong_estimate_with_zero_power_is_one() {
    let c = LinearMeanField::new(1, 2.0, 1.0, 0.5, 0.3).unwrap();
    let levy = common::levy(1, 2.0, 0.0);
    let mut cfg = small_cfg("linear");
    cfg.q1 = 0.0;
    let report = run_strong_poc(&c, &normal(1), &levy, &cfg).unwrap();
    for pt in &report.points {
        assert_eq!(pt.estimate, 1.0);
        assert_eq!(pt.se, 0.0);
    }
    assert_eq!(report.theoretical, 0.0);
    assert_eq!(report.verdict, Verdict::Pass);
}

#[test]
fn poc_runs_are_reproducible_and_worker_independent() {
    let c = LinearMeanField::new(1, 2.0, 1.0, 0.5, 0.3).unwrap();
    let levy = common::levy(1, 2.0, 0.5);
    let mut cfg = small_cfg("linear");
    let a = run_weak_poc(&c, &normal(1), &levy, &cfg).unwrap();
    cfg.exec = Exec::Parallel;
    let b = run_weak_poc(&c, &normal(1), &levy, &cfg).unwrap();
    assert_eq!(a, b);
    cfg.seed += 1;
    let other = run_weak_poc(&c, &normal(1), &levy, &cfg).unwrap();
    assert_ne!(a.points, other.points);
}

#[test]
fn moment_ratios_are_stable_under_mean_reversion() {
    let c = LinearMeanField::new(2, 2.0, 1.0, 0.5, 0.2).unwrap();
    let levy = common::levy(2, 2.0, 0.5);
    let mut cfg = MomentConfig::new(200, 1.0, 0.02, 3);
    cfg.exec = Exec::Sequential;
    let report = run_moment_experiment(&c, &normal(2), &levy, &cfg).unwrap();
    assert_eq!(report.rows.len(), 4);
    for row in &report.rows {
        assert!(row.mean_of_sup >= row.sup_of_mean * (1.0 - 1e-12));
        assert!(row.sup_of_mean >= row.initial.max(row.terminal) * (1.0 - 1e-12));
    }
    assert!(
        report.spread >= 1.0 && report.spread < cfg.max_spread,
        "{}",
        report.spread
    );
    assert_eq!(report.verdict, Verdict::Pass);
}

#[test]
fn moment_experiment_reports_divergence() {
    let c = Frozen::new(1, 2.0).unwrap().drift(0.0, 0.0, 1.0);
    let levy = common::silent(1);
    let mut cfg = MomentConfig::new(10, 2.0, 0.1, 3);
    cfg.scalings = vec![1.0, 10.0];
    let r = run_moment_experiment(&c, &normal(1), &levy, &cfg);
    assert!(matches!(r, Err(Error::Divergence { .. })), "{r:?}");
}
