//! Invariant suite for the distance routines, run on pseudo-random clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{w_p, w_p_1d, w_p_exact, w_p_sliced, w_pp};
use crate::model::measure::EmpiricalMeasure;
use crate::numeric::dist;
use crate::stream::{Layer, NoiseStream, StreamId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestRow {
    pub check: String,
    pub cases: usize,
    /// Largest violation seen (0 when the invariant held exactly).
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn row(check: &str, cases: usize, worst: f64, tolerance: f64) -> SelfTestRow {
    SelfTestRow {
        check: check.to_string(),
        cases,
        worst,
        tolerance,
        pass: worst <= tolerance,
    }
}

/// Running maximum that treats NaN as an infinite violation.
fn bump(worst: &mut f64, v: f64) {
    *worst = if v.is_nan() {
        f64::INFINITY
    } else {
        worst.max(v)
    };
}

fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, lo: f64, hi: f64) -> EmpiricalMeasure {
    let pts = (0..n * d)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    EmpiricalMeasure::new(d, pts).expect("non-empty cloud")
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_wpp(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> f64 {
    let n = a.len();
    permutations(n)
        .iter()
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| dist(a.point(i), b.point(j)).powf(p))
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// Runs every invariant with `cases` random instances each.
pub fn selftest(seed: u64, cases: usize) -> Vec<SelfTestRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders = [1.0, 1.5, 2.0];
    let mut rows = Vec::new();

    let mut worst = 0.0f64;
    for t in 0..cases {
        let (n, d, p) = (1 + t % 7, 1 + t % 3, orders[t % 3]);
        let (a, b) = (
            cloud(&mut rng, n, d, -2.0, 2.0),
            cloud(&mut rng, n, d, -2.0, 2.0),
        );
        let got = w_p_exact(&a, &b, p).map(|r| r.1.cost).unwrap_or(f64::NAN);
        let want = brute_wpp(&a, &b, p);
        bump(&mut worst, (got - want).abs() / want.max(1e-300));
    }
    rows.push(row("assignment_matches_brute_force", cases, worst, 1e-12));

    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(1..=100usize);
        let (a, b) = (
            cloud(&mut rng, n, 1, -5.0, 5.0),
            cloud(&mut rng, n, 1, 0.0, 3.0),
        );
        for p in orders {
            let sorted = w_p_1d(&a, &b, p).unwrap_or(f64::NAN);
            let exact = w_p_exact(&a, &b, p).map(|r| r.0).unwrap_or(f64::NAN);
            bump(&mut worst, (sorted - exact).abs());
        }
    }
    rows.push(row(
        "sorted_coupling_matches_assignment",
        cases,
        worst,
        1e-9,
    ));

    let mut identity = 0.0f64;
    let mut symmetry = 0.0f64;
    let mut triangle = 0.0f64;
    let mut monotone = 0.0f64;
    let mut translation = 0.0f64;
    let mut sliced = 0.0f64;
    for t in 0..cases {
        let n = rng.random_range(1..=12usize);
        let d = rng.random_range(1..=3usize);
        let (x, y, z) = (
            cloud(&mut rng, n, d, -3.0, 3.0),
            cloud(&mut rng, n, d, -3.0, 3.0),
            cloud(&mut rng, n, d, -3.0, 3.0),
        );
        for p in orders {
            let w = |a: &EmpiricalMeasure, b: &EmpiricalMeasure| w_p(a, b, p).unwrap_or(f64::NAN);
            let xy = w(&x, &y);
            bump(&mut identity, w(&x, &x));
            bump(&mut symmetry, (xy - w(&y, &x)).abs() / (1.0 + xy));
            bump(&mut triangle, xy - w(&x, &z) - w(&z, &y));
            let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            bump(
                &mut translation,
                (w(&x.translated(&v), &y.translated(&v)) - xy).abs(),
            );
            let stream = NoiseStream::new(seed, StreamId::new(0x5E1F, t as u64, 0, Layer::Aux(9)));
            let s = w_p_sliced(&x, &y, p, 16, &stream)
                .map(|e| e.value)
                .unwrap_or(f64::NAN);
            bump(&mut sliced, s - xy);
        }
        let w1 = w_pp(&x, &y, 1.0).unwrap_or(f64::NAN);
        let w2 = w_p(&x, &y, 2.0).unwrap_or(f64::NAN);
        bump(&mut monotone, w1 - w2);
    }
    rows.push(row("identity", cases, identity, 0.0));
    rows.push(row("symmetry", cases, symmetry, 1e-12));
    rows.push(row("triangle_inequality", cases, triangle, 1e-12));
    rows.push(row("translation_invariance", cases, translation, 1e-9));
    rows.push(row("order_monotonicity", cases, monotone, 1e-12));
    rows.push(row("sliced_below_exact", cases, sliced, 1e-12));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_pass() {
        for r in selftest(3, 60) {
            assert!(r.pass, "{r:?}");
        }
    }
}
