//! L^p-Wasserstein distances between equal-size empirical measures, and the
//! weighted sup-metrics on measure flows.

pub mod assignment;
pub mod selftest;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use selftest::{selftest, SelfTestRow};

use crate::error::{Error, Result};
use crate::model::measure::{EmpiricalMeasure, MeasureFlow};
use crate::numeric::{compensated_sum, dist, mean_and_se};
use crate::stream::NoiseStream;

/// Default size cap for the exact assignment solver.
pub const DEFAULT_EXACT_CAP: usize = 4096;

/// Optimal coupling between two equal-size clouds: `perm[i]` is the partner of
/// point `i`, each pair carrying mass `1/n`. `cost` is `(1/n) Σ |x_i - y_perm(i)|^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub perm: Vec<usize>,
    pub cost: f64,
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            left: mu.dim(),
            right: nu.dim(),
        });
    }
    if mu.len() != nu.len() {
        return Err(Error::SizeMismatch {
            left: mu.len(),
            right: nu.len(),
        });
    }
    if !(p >= 1.0) {
        return Err(Error::Domain(format!(
            "Wasserstein order must be >= 1, got {p}"
        )));
    }
    Ok(())
}

fn pow_cost(d: f64, p: f64) -> f64 {
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `W_p^p` between two equal-size one-dimensional samples.
pub fn w_pp_1d_values(x: &[f64], y: &[f64], p: f64) -> f64 {
    let xs = sorted(x);
    let ys = sorted(y);
    compensated_sum(xs.iter().zip(&ys).map(|(a, b)| pow_cost((a - b).abs(), p))) / x.len() as f64
}

/// Exact `W_p` in one dimension via the sorted (monotone) coupling.
pub fn w_p_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_pair(mu, nu, p)?;
    if mu.dim() != 1 {
        return Err(Error::Domain(format!(
            "w_p_1d needs one-dimensional clouds, got d = {}",
            mu.dim()
        )));
    }
    Ok(w_pp_1d_values(mu.points(), nu.points(), p).powf(1.0 / p))
}

/// Exact `W_p` by minimum-cost assignment, capped at [`DEFAULT_EXACT_CAP`] points.
pub fn w_p_exact(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
) -> Result<(f64, TransportPlan)> {
    w_p_exact_capped(mu, nu, p, DEFAULT_EXACT_CAP)
}

pub fn w_p_exact_capped(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
    cap: usize,
) -> Result<(f64, TransportPlan)> {
    check_pair(mu, nu, p)?;
    let n = mu.len();
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    let mut cost = Vec::with_capacity(n * n);
    for x in mu.iter() {
        for y in nu.iter() {
            cost.push(pow_cost(dist(x, y), p));
        }
    }
    let perm = assignment::solve(n, &cost);
    let total = compensated_sum(perm.iter().enumerate().map(|(i, &j)| cost[i * n + j])) / n as f64;
    Ok((total.powf(1.0 / p), TransportPlan { perm, cost: total }))
}

/// Exact `W_p^p`: sorted coupling in one dimension, assignment otherwise.
pub fn w_pp(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_pair(mu, nu, p)?;
    if mu.dim() == 1 {
        Ok(w_pp_1d_values(mu.points(), nu.points(), p))
    } else {
        Ok(w_p_exact(mu, nu, p)?.1.cost)
    }
}

/// Exact `W_p`: sorted coupling in one dimension, assignment otherwise.
pub fn w_p(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    Ok(w_pp(mu, nu, p)?.powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicedEstimate {
    pub value: f64,
    pub se: f64,
}

/// Average of one-dimensional `W_p` over `projections` uniform random
/// directions. A scalable surrogate that never exceeds `W_p` itself.
pub fn w_p_sliced(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
    projections: usize,
    stream: &NoiseStream,
) -> Result<SlicedEstimate> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            left: mu.dim(),
            right: nu.dim(),
        });
    }
    check_pair(mu, nu, p)?;
    let d = mu.dim();
    let mut rng = stream.rng();
    let mut dir = vec![0.0; d];
    let mut vals = Vec::with_capacity(projections.max(1));
    for _ in 0..projections.max(1) {
        if d == 1 {
            dir[0] = 1.0;
        } else {
            let mut s = 0.0f64;
            while s < 1e-300 {
                s = 0.0;
                for v in dir.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    s += *v * *v;
                }
            }
            let inv = 1.0 / s.sqrt();
            dir.iter_mut().for_each(|v| *v *= inv);
        }
        let px: Vec<f64> = mu.iter().map(|x| crate::numeric::dot(x, &dir)).collect();
        let py: Vec<f64> = nu.iter().map(|y| crate::numeric::dot(y, &dir)).collect();
        vals.push(w_pp_1d_values(&px, &py, p).powf(1.0 / p));
    }
    let (value, se) = mean_and_se(&vals);
    Ok(SlicedEstimate { value, se })
}

fn check_grids(a: &MeasureFlow, b: &MeasureFlow) -> Result<()> {
    if a.times() != b.times() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `sup_t e^{-γ t} W_β(μ_t, ν_t)` over the shared grid.
pub fn flow_distance(a: &MeasureFlow, b: &MeasureFlow, beta: f64, gamma: f64) -> Result<f64> {
    check_grids(a, b)?;
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be >= 0, got {gamma}")));
    }
    let mut sup = 0.0f64;
    for (k, t) in a.times().iter().enumerate() {
        let w = w_p(a.cloud(k), b.cloud(k), beta)?;
        sup = sup.max((-gamma * t).exp() * w);
    }
    Ok(sup)
}

/// Conditional variant: `sup_t e^{-γ t} (mean_j W_β^β(μ^j_t, ν^j_t))^{1/β}`
/// over a family of flow pairs indexed by common-noise path `j`.
pub fn conditional_flow_distance(
    a: &[MeasureFlow],
    b: &[MeasureFlow],
    beta: f64,
    gamma: f64,
) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    for (x, y) in a.iter().zip(b) {
        check_grids(x, y)?;
        check_grids(x, &a[0])?;
    }
    let mut sup = 0.0f64;
    for (k, t) in a[0].times().iter().enumerate() {
        let mut terms = Vec::with_capacity(a.len());
        for (x, y) in a.iter().zip(b) {
            terms.push(w_pp(x.cloud(k), y.cloud(k), beta)?);
        }
        let avg = compensated_sum(terms) / a.len() as f64;
        sup = sup.max((-gamma * t).exp() * avg.powf(1.0 / beta));
    }
    Ok(sup)
}
