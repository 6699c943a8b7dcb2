mod common;

use std::sync::Arc;

use mvlab::levy::{
    nu_expectation, sample_big_jumps, sample_small_jumps, Annulus, Band, MarkSampler,
    RadialExponential,
};
use mvlab::numeric::{norm, norm_sq};
use mvlab::stream::{tag, Layer, NoiseStream, StreamId};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn stream(particle: u64, layer: Layer) -> NoiseStream {
    NoiseStream::new(7, StreamId::new(tag("levy-tests"), 0, particle, layer))
}

/// Kolmogorov-Smirnov statistic of `sample` against `cdf`.
fn ks(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

// 1% critical value
fn ks_bound(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[test]
fn big_jump_counts_are_poisson() {
    let (rate, horizon, runs) = (3.0, 2.0, 4000);
    let model = common::levy(1, 0.0, rate);
    let counts: Vec<f64> = (0..runs)
        .map(|p| {
            sample_big_jumps(&stream(p, Layer::BigJumps), horizon, &model)
                .unwrap()
                .len() as f64
        })
        .collect();
    let lambda = rate * horizon;
    let mean = counts.iter().sum::<f64>() / runs as f64;
    assert!(
        (mean - lambda).abs() < 4.0 * (lambda / runs as f64).sqrt(),
        "mean {mean}"
    );

    // dispersion test: sum (N - λ)^2 / λ ~ χ²(runs)
    let stat: f64 = counts.iter().map(|n| (n - lambda).powi(2) / lambda).sum();
    let chi = ChiSquared::new(runs as f64).unwrap();
    let pval = chi.cdf(stat);
    assert!(pval > 0.001 && pval < 0.999, "dispersion p = {pval}");
}

#[test]
fn gaps_are_exponential() {
    let rate = 2.5;
    let model = common::levy(1, 0.0, rate);
    let mut gaps = Vec::new();
    for p in 0..400 {
        let ev = sample_big_jumps(&stream(p, Layer::BigJumps), 4.0, &model).unwrap();
        if let Some(first) = ev.first() {
            gaps.push(first.time);
        }
        gaps.extend(ev.windows(2).map(|w| w[1].time - w[0].time));
    }
    // conditioned on gap < 1
    let short: Vec<f64> = gaps.into_iter().filter(|&g| g < 1.0).collect();
    let mass = -(-rate * 1.0f64).exp_m1();
    let d = ks(short.clone(), |x| -(-rate * x).exp_m1() / mass);
    assert!(
        d < ks_bound(short.len()),
        "KS {d} over {} gaps",
        short.len()
    );
}

#[test]
fn annulus_radii_follow_volume_law() {
    let law = Annulus::new(0.5, 1.5);
    let mut rng = stream(0, Layer::Aux(1)).rng();
    let mut z = [0.0; 3];
    let radii: Vec<f64> = (0..5000)
        .map(|_| {
            law.sample_into(&mut rng, &mut z);
            norm(&z)
        })
        .collect();
    let d = ks(radii, |r| law.radial_cdf(3, r).unwrap());
    assert!(d < ks_bound(5000), "KS {d}");
}

#[test]
fn truncated_exponential_radii_match_cdf() {
    let law = RadialExponential::truncated(1.0, 1.5, 6.0);
    let mut rng = stream(1, Layer::Aux(1)).rng();
    let mut z = [0.0; 2];
    let radii: Vec<f64> = (0..5000)
        .map(|_| {
            law.sample_into(&mut rng, &mut z);
            norm(&z)
        })
        .collect();
    assert!(radii.iter().all(|&r| (1.0..=6.0).contains(&r)));
    let d = ks(radii, |r| law.radial_cdf(2, r).unwrap());
    assert!(d < ks_bound(5000), "KS {d}");
}

#[test]
fn directions_are_centred() {
    let law = Annulus::sphere(1.0);
    let mut rng = stream(2, Layer::Aux(1)).rng();
    let mut z = [0.0; 4];
    let mut sum = [0.0; 4];
    let n = 20_000;
    for _ in 0..n {
        law.sample_into(&mut rng, &mut z);
        sum.iter_mut().zip(&z).for_each(|(s, v)| *s += v);
    }
    // each coordinate has variance 1/4
    for s in sum {
        assert!((s / n as f64).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }
}

#[test]
fn monte_carlo_moment_agrees_with_closed_form() {
    let model = common::levy_with(
        2,
        4.0,
        Arc::new(Annulus::new(0.2, 0.9)),
        1.5,
        Arc::new(RadialExponential::new(1.0, 2.0)),
    );
    for (band, q) in [(Band::U, 2.0), (Band::V, 1.0), (Band::V, 1.7)] {
        let exact = model.norm_moment(band, q).unwrap();
        let mc = nu_expectation(
            &model,
            band,
            |z| norm(z).powf(q),
            200_000,
            &stream(3, Layer::Aux(2)),
        )
        .unwrap();
        assert!(
            (mc.value - exact).abs() < 5.0 * mc.se + 1e-9,
            "{band:?} q={q}: {} vs {exact}",
            mc.value
        );
    }
    let second = nu_expectation(&model, Band::U, norm_sq, 10, &stream(3, Layer::Aux(3))).unwrap();
    assert!(second.value > 0.0);
}

#[test]
fn compensator_scales_with_interval() {
    let model = common::levy(3, 2.0, 0.0);
    let (_, c1) = sample_small_jumps(&stream(4, Layer::SmallJumps), (0.0, 0.5), &model).unwrap();
    let (_, c2) = sample_small_jumps(&stream(4, Layer::SmallJumps), (0.5, 1.5), &model).unwrap();
    let m = model.small_mean();
    for j in 0..3 {
        assert!((c1[j] - 0.5 * m[j]).abs() < 1e-15);
        assert!((c2[j] - 1.0 * m[j]).abs() < 1e-15);
    }
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let model = common::levy(2, 0.0, 5.0);
    let a = sample_big_jumps(&stream(5, Layer::BigJumps), 3.0, &model).unwrap();
    let b = sample_big_jumps(&stream(5, Layer::BigJumps), 3.0, &model).unwrap();
    let c = sample_big_jumps(&stream(6, Layer::BigJumps), 3.0, &model).unwrap();
    let d = sample_big_jumps(&stream(5, Layer::CommonBigJumps), 3.0, &model).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_ne!(a, d);
}

#[test]
fn horizon_extension_keeps_the_prefix() {
    let model = common::levy(1, 0.0, 4.0);
    let s = stream(8, Layer::BigJumps);
    let short = sample_big_jumps(&s, 1.0, &model).unwrap();
    let long = sample_big_jumps(&s, 3.0, &model).unwrap();
    assert_eq!(short[..], long[..short.len()]);
    assert!(long[short.len()..].iter().all(|e| e.time > 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn annulus_marks_stay_in_bounds(
        inner in 0.01f64..2.0,
        width in 0.0f64..3.0,
        dim in 1usize..6,
        seed in any::<u64>(),
    ) {
        let law = Annulus::new(inner, inner + width);
        let mut rng = NoiseStream::new(seed, StreamId::new(0, 0, 0, Layer::Aux(0))).rng();
        let mut z = vec![0.0; dim];
        for _ in 0..50 {
            law.sample_into(&mut rng, &mut z);
            let r = norm(&z);
            prop_assert!(r >= inner * (1.0 - 1e-12) && r <= (inner + width) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn exponential_marks_respect_truncation(
        inner in 0.5f64..2.0,
        decay in 0.1f64..5.0,
        span in 0.1f64..5.0,
        seed in any::<u64>(),
    ) {
        let law = RadialExponential::truncated(inner, decay, inner + span);
        let mut rng = NoiseStream::new(seed, StreamId::new(0, 0, 0, Layer::Aux(0))).rng();
        let mut z = [0.0; 2];
        for _ in 0..50 {
            law.sample_into(&mut rng, &mut z);
            let r = norm(&z);
            prop_assert!(r >= inner * (1.0 - 1e-12) && r <= (inner + span) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn big_jumps_sorted_inside_horizon(rate in 0.0f64..20.0, horizon in 0.01f64..5.0, particle in any::<u64>()) {
        let model = common::levy(2, 0.0, rate);
        let ev = sample_big_jumps(&stream(particle, Layer::BigJumps), horizon, &model).unwrap();
        prop_assert!(ev.windows(2).all(|w| w[0].time < w[1].time));
        prop_assert!(ev.iter().all(|e| e.time > 0.0 && e.time <= horizon && e.band == Band::V));
        prop_assert!(ev.iter().all(|e| norm(&e.mark) >= 1.0));
    }
}
