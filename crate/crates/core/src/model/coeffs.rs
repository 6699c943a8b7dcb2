//! Coefficient sets `(b, f, g)` and the optional common-noise pair `(f⁰, g⁰)`.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::levy::{Band, LevyModel};
use crate::model::measure::{interaction_term, EmpiricalMeasure, Kernel};
use crate::numeric::{dot, norm, norm_sq};

/// Coefficients of the jump McKean-Vlasov equation.
///
/// `b(x, μ)` drives the `dt` term, `f(x, μ, z)` integrates against the
/// compensated small-jump measure and `g(x, μ, z)` against the big-jump
/// measure. The common-noise pair defaults to zero.
pub trait Coefficients: Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn beta(&self) -> f64;

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]);

    fn small_jump(&self, x: &[f64], mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]);

    fn big_jump(&self, x: &[f64], mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]);

    /// `Some(s)` when `f(x, μ, z) = s(x, μ) z`; lets ν-integrals of `f` be exact.
    fn small_jump_scale(&self, _x: &[f64], _mu: &EmpiricalMeasure) -> Option<f64> {
        None
    }

    /// Whether any coefficient reads its measure argument.
    fn depends_on_measure(&self) -> bool {
        true
    }

    fn small_jump_depends_on_measure(&self) -> bool {
        self.depends_on_measure()
    }

    fn has_common_noise(&self) -> bool {
        false
    }

    fn common_small_jump(&self, _x: &[f64], _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn common_small_jump_scale(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }

    fn common_big_jump(&self, _x: &[f64], _mu: &EmpiricalMeasure, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `∫_U f(x, μ, z) ν(dz)`, written into `out`.
pub fn small_jump_compensator(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    x: &[f64],
    mu: &EmpiricalMeasure,
    small_mean: &[f64],
    out: &mut [f64],
) {
    let rate = levy.rate(Band::U);
    if rate == 0.0 {
        out.fill(0.0);
        return;
    }
    if let Some(s) = coeffs.small_jump_scale(x, mu) {
        for (o, m) in out.iter_mut().zip(small_mean) {
            *o = s * m;
        }
        return;
    }
    let d = x.len();
    let q = levy.band_quadrature(Band::U);
    let k = q.len() / d;
    let mut acc = vec![0.0; d];
    let mut f = vec![0.0; d];
    for z in q.chunks(d) {
        coeffs.small_jump(x, mu, z, &mut f);
        acc.iter_mut().zip(&f).for_each(|(a, v)| *a += v);
    }
    for (o, a) in out.iter_mut().zip(acc) {
        *o = rate * a / k as f64;
    }
}

/// `∫_U f⁰(x, z) ν⁰(dz)`.
pub fn common_small_jump_compensator(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    x: &[f64],
    small_mean: &[f64],
    out: &mut [f64],
) {
    if levy.rate(Band::U) == 0.0 {
        out.fill(0.0);
        return;
    }
    if let Some(s) = coeffs.common_small_jump_scale(x) {
        for (o, m) in out.iter_mut().zip(small_mean) {
            *o = s * m;
        }
        return;
    }
    let d = x.len();
    let q = levy.band_quadrature(Band::U);
    let k = q.len() / d;
    let mut acc = vec![0.0; d];
    let mut f = vec![0.0; d];
    for z in q.chunks(d) {
        coeffs.common_small_jump(x, z, &mut f);
        acc.iter_mut().zip(&f).for_each(|(a, v)| *a += v);
    }
    let rate = levy.rate(Band::U);
    for (o, a) in out.iter_mut().zip(acc) {
        *o = rate * a / k as f64;
    }
}

/// `ν(|f(x, μ₁, ·) - f(y, μ₂, ·)|² 1_U)`.
pub fn small_jump_sq_diff(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    x: &[f64],
    mu1: &EmpiricalMeasure,
    y: &[f64],
    mu2: &EmpiricalMeasure,
) -> f64 {
    if levy.rate(Band::U) == 0.0 {
        return 0.0;
    }
    if let (Some(s1), Some(s2)) = (
        coeffs.small_jump_scale(x, mu1),
        coeffs.small_jump_scale(y, mu2),
    ) {
        let m2 = levy.norm_moment(Band::U, 2.0).unwrap_or(f64::INFINITY);
        return (s1 - s2) * (s1 - s2) * m2;
    }
    let d = x.len();
    let q = levy.band_quadrature(Band::U);
    let k = q.len() / d;
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let acc: f64 = q
        .chunks(d)
        .map(|z| {
            coeffs.small_jump(x, mu1, z, &mut a);
            coeffs.small_jump(y, mu2, z, &mut b);
            a.iter()
                .zip(&b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
        })
        .sum();
    levy.rate(Band::U) * acc / k as f64
}

/// `ν⁰(|f⁰(x, ·) - f⁰(y, ·)|² 1_U)`; pass `y = None` for `ν⁰(|f⁰(x, ·)|² 1_U)`.
pub fn common_small_jump_sq(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    x: &[f64],
    y: Option<&[f64]>,
) -> f64 {
    if levy.rate(Band::U) == 0.0 {
        return 0.0;
    }
    let zero = vec![0.0; x.len()];
    let sx = coeffs.common_small_jump_scale(x);
    let sy = match y {
        Some(y) => coeffs.common_small_jump_scale(y),
        None => Some(0.0),
    };
    if let (Some(s1), Some(s2)) = (sx, sy) {
        let m2 = levy.norm_moment(Band::U, 2.0).unwrap_or(f64::INFINITY);
        return (s1 - s2) * (s1 - s2) * m2;
    }
    let d = x.len();
    let q = levy.band_quadrature(Band::U);
    let k = q.len() / d;
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let acc: f64 = q
        .chunks(d)
        .map(|z| {
            coeffs.common_small_jump(x, z, &mut a);
            match y {
                Some(y) => coeffs.common_small_jump(y, z, &mut b),
                None => b.copy_from_slice(&zero),
            }
            a.iter()
                .zip(&b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
        })
        .sum();
    levy.rate(Band::U) * acc / k as f64
}

/// `ν(|f(x, μ, ·)|² 1_U)`.
pub fn small_jump_sq(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    x: &[f64],
    mu: &EmpiricalMeasure,
) -> f64 {
    if levy.rate(Band::U) == 0.0 {
        return 0.0;
    }
    if let Some(s) = coeffs.small_jump_scale(x, mu) {
        return s * s * levy.norm_moment(Band::U, 2.0).unwrap_or(f64::INFINITY);
    }
    let d = x.len();
    let q = levy.band_quadrature(Band::U);
    let k = q.len() / d;
    let mut a = vec![0.0; d];
    let acc: f64 = q
        .chunks(d)
        .map(|z| {
            coeffs.small_jump(x, mu, z, &mut a);
            norm_sq(&a)
        })
        .sum();
    levy.rate(Band::U) * acc / k as f64
}

/// Example family with a cubic confining drift and a Wasserstein interaction:
///
/// ```text
/// b(x, μ)    = C1 x - C2 x |x|² + T(x, μ) 1
/// f(x, μ, z) = C3 z (1 + C4 |x|² + T(x, μ))
/// g(x, μ, z) = (1 + z)(1 + |x| + T(x, μ))
/// T(x, μ)    = μ(|h(x - ·)|^β)^{1/β}
/// ```
///
/// With `small_jump_interaction = false` the `T` term is dropped from `f`,
/// which makes `f` measure-free as required by the particle-system results.
#[derive(Debug, Clone)]
pub struct CubicInteraction {
    pub dim: usize,
    pub beta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub kernel: Kernel,
    pub small_jump_interaction: bool,
}

impl CubicInteraction {
    pub fn new(dim: usize, beta: f64, c: [f64; 4], kernel: Kernel) -> Result<Self> {
        validate_beta(beta)?;
        if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!(
                "cubic_interaction constants must be positive, got {c:?}"
            )));
        }
        Ok(Self {
            dim,
            beta,
            c1: c[0],
            c2: c[1],
            c3: c[2],
            c4: c[3],
            kernel,
            small_jump_interaction: true,
        })
    }

    pub fn with_small_jump_interaction(mut self, on: bool) -> Self {
        self.small_jump_interaction = on;
        self
    }

    fn interaction(&self, x: &[f64], mu: &EmpiricalMeasure) -> f64 {
        interaction_term(mu, x, &self.kernel, self.beta)
    }

    /// `12 C3² C4² ν(|·|² 1_U)`; the drift constant `C2` must exceed it.
    pub fn stability_threshold(&self, levy: &LevyModel) -> Result<f64> {
        Ok(12.0 * self.c3 * self.c3 * self.c4 * self.c4 * levy.norm_moment(Band::U, 2.0)?)
    }
}

impl Coefficients for CubicInteraction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let t = self.interaction(x, mu);
        let r2 = norm_sq(x);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.c1 * xi - self.c2 * xi * r2 + t;
        }
    }

    fn small_jump(&self, x: &[f64], mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]) {
        let s = self.small_jump_scale(x, mu).expect("linear in the mark");
        for (o, zi) in out.iter_mut().zip(z) {
            *o = s * zi;
        }
    }

    fn big_jump(&self, x: &[f64], mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]) {
        let s = 1.0 + norm(x) + self.interaction(x, mu);
        for (o, zi) in out.iter_mut().zip(z) {
            *o = (1.0 + zi) * s;
        }
    }

    fn small_jump_scale(&self, x: &[f64], mu: &EmpiricalMeasure) -> Option<f64> {
        let t = if self.small_jump_interaction {
            self.interaction(x, mu)
        } else {
            0.0
        };
        Some(self.c3 * (1.0 + self.c4 * norm_sq(x) + t))
    }

    fn depends_on_measure(&self) -> bool {
        !self.kernel.is_zero()
    }

    fn small_jump_depends_on_measure(&self) -> bool {
        self.small_jump_interaction && !self.kernel.is_zero()
    }
}

/// `b = -a x + c mean(μ)`, `f = γ z`, `g ≡ 0`, optional common pair
/// `f⁰ = γ⁰ z`, `g⁰ = η⁰ z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMeanField {
    pub dim: usize,
    pub beta: f64,
    pub a: f64,
    pub c: f64,
    pub small_jump_scale: f64,
    pub common_small_jump_scale: f64,
    pub common_big_jump_scale: f64,
}

impl LinearMeanField {
    pub fn new(dim: usize, beta: f64, a: f64, c: f64, small_jump_scale: f64) -> Result<Self> {
        validate_beta(beta)?;
        Ok(Self {
            dim,
            beta,
            a,
            c,
            small_jump_scale,
            common_small_jump_scale: 0.0,
            common_big_jump_scale: 0.0,
        })
    }

    pub fn with_common(mut self, small: f64, big: f64) -> Self {
        self.common_small_jump_scale = small;
        self.common_big_jump_scale = big;
        self
    }
}

impl Coefficients for LinearMeanField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        for ((o, xi), m) in out.iter_mut().zip(x).zip(mu.mean()) {
            *o = -self.a * xi + self.c * m;
        }
    }

    fn small_jump(&self, _x: &[f64], _mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]) {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = self.small_jump_scale * zi;
        }
    }

    fn big_jump(&self, _x: &[f64], _mu: &EmpiricalMeasure, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn small_jump_scale(&self, _x: &[f64], _mu: &EmpiricalMeasure) -> Option<f64> {
        Some(self.small_jump_scale)
    }

    fn depends_on_measure(&self) -> bool {
        self.c != 0.0
    }

    fn small_jump_depends_on_measure(&self) -> bool {
        false
    }

    fn has_common_noise(&self) -> bool {
        self.common_small_jump_scale != 0.0 || self.common_big_jump_scale != 0.0
    }

    fn common_small_jump(&self, _x: &[f64], z: &[f64], out: &mut [f64]) {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = self.common_small_jump_scale * zi;
        }
    }

    fn common_small_jump_scale(&self, _x: &[f64]) -> Option<f64> {
        Some(self.common_small_jump_scale)
    }

    fn common_big_jump(&self, _x: &[f64], _mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]) {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = self.common_big_jump_scale * zi;
        }
    }
}

/// Measure-independent family:
/// `b = a0 + a1 x + a3 x |x|²`, `f = γ z`, `g = η z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frozen {
    pub dim: usize,
    pub beta: f64,
    pub drift_constant: f64,
    pub drift_linear: f64,
    pub drift_cubic: f64,
    pub small_jump_scale: f64,
    pub big_jump_scale: f64,
}

impl Frozen {
    pub fn new(dim: usize, beta: f64) -> Result<Self> {
        validate_beta(beta)?;
        Ok(Self {
            dim,
            beta,
            drift_constant: 0.0,
            drift_linear: 0.0,
            drift_cubic: 0.0,
            small_jump_scale: 0.0,
            big_jump_scale: 0.0,
        })
    }

    pub fn drift(mut self, constant: f64, linear: f64, cubic: f64) -> Self {
        self.drift_constant = constant;
        self.drift_linear = linear;
        self.drift_cubic = cubic;
        self
    }

    pub fn jumps(mut self, small: f64, big: f64) -> Self {
        self.small_jump_scale = small;
        self.big_jump_scale = big;
        self
    }
}

impl Coefficients for Frozen {
    fn dim(&self) -> usize {
        self.dim
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn drift(&self, x: &[f64], _mu: &EmpiricalMeasure, out: &mut [f64]) {
        let r2 = norm_sq(x);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.drift_constant + self.drift_linear * xi + self.drift_cubic * xi * r2;
        }
    }

    fn small_jump(&self, _x: &[f64], _mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]) {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = self.small_jump_scale * zi;
        }
    }

    fn big_jump(&self, _x: &[f64], _mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]) {
        for (o, zi) in out.iter_mut().zip(z) {
            *o = self.big_jump_scale * zi;
        }
    }

    fn small_jump_scale(&self, _x: &[f64], _mu: &EmpiricalMeasure) -> Option<f64> {
        Some(self.small_jump_scale)
    }

    fn depends_on_measure(&self) -> bool {
        false
    }
}

type VecFn = dyn Fn(&[f64], &EmpiricalMeasure, &mut [f64]) + Send + Sync;
type MarkFn = dyn Fn(&[f64], &EmpiricalMeasure, &[f64], &mut [f64]) + Send + Sync;

/// User-supplied coefficients built from closures.
#[derive(Clone)]
pub struct CoefficientSet {
    dim: usize,
    beta: f64,
    drift: Arc<VecFn>,
    small_jump: Arc<MarkFn>,
    big_jump: Arc<MarkFn>,
    measure_dependent: bool,
}

impl Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dim", &self.dim)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    pub fn new<B, F, G>(dim: usize, beta: f64, drift: B, small_jump: F, big_jump: G) -> Result<Self>
    where
        B: Fn(&[f64], &EmpiricalMeasure, &mut [f64]) + Send + Sync + 'static,
        F: Fn(&[f64], &EmpiricalMeasure, &[f64], &mut [f64]) + Send + Sync + 'static,
        G: Fn(&[f64], &EmpiricalMeasure, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        validate_beta(beta)?;
        Ok(Self {
            dim,
            beta,
            drift: Arc::new(drift),
            small_jump: Arc::new(small_jump),
            big_jump: Arc::new(big_jump),
            measure_dependent: true,
        })
    }

    pub fn measure_independent(mut self) -> Self {
        self.measure_dependent = false;
        self
    }
}

impl Coefficients for CoefficientSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        (self.drift)(x, mu, out)
    }

    fn small_jump(&self, x: &[f64], mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]) {
        (self.small_jump)(x, mu, z, out)
    }

    fn big_jump(&self, x: &[f64], mu: &EmpiricalMeasure, z: &[f64], out: &mut [f64]) {
        (self.big_jump)(x, mu, z, out)
    }

    fn depends_on_measure(&self) -> bool {
        self.measure_dependent
    }
}

pub fn validate_beta(beta: f64) -> Result<()> {
    if (1.0..=2.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "beta must lie in [1, 2], got {beta}"
        )))
    }
}

/// Numeric parameters for building a family by name.
pub type FamilyParams = BTreeMap<String, f64>;

type Ctor = Box<dyn Fn(usize, f64, &FamilyParams) -> Result<Arc<dyn Coefficients>> + Send + Sync>;

/// Name → constructor table for coefficient families.
pub struct FamilyRegistry {
    ctors: BTreeMap<String, Ctor>,
}

fn param(p: &FamilyParams, key: &str, default: Option<f64>) -> Result<f64> {
    match (p.get(key), default) {
        (Some(v), _) => Ok(*v),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(Error::Config(format!("missing model parameter `{key}`"))),
    }
}

impl FamilyRegistry {
    pub fn empty() -> Self {
        Self {
            ctors: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("cubic_interaction", |dim, beta, p| {
            let c = [
                param(p, "c1", None)?,
                param(p, "c2", None)?,
                param(p, "c3", None)?,
                param(p, "c4", None)?,
            ];
            let kernel = Kernel::Linear(param(p, "kernel_scale", Some(1.0))?);
            let inter = param(p, "small_jump_interaction", Some(1.0))? != 0.0;
            Ok(Arc::new(
                CubicInteraction::new(dim, beta, c, kernel)?.with_small_jump_interaction(inter),
            ))
        });
        r.register("linear_meanfield", |dim, beta, p| {
            let m = LinearMeanField::new(
                dim,
                beta,
                param(p, "a", None)?,
                param(p, "c", None)?,
                param(p, "small_jump_scale", Some(0.0))?,
            )?
            .with_common(
                param(p, "common_small_jump_scale", Some(0.0))?,
                param(p, "common_big_jump_scale", Some(0.0))?,
            );
            Ok(Arc::new(m))
        });
        r.register("frozen", |dim, beta, p| {
            Ok(Arc::new(
                Frozen::new(dim, beta)?
                    .drift(
                        param(p, "drift_constant", Some(0.0))?,
                        param(p, "drift_linear", Some(0.0))?,
                        param(p, "drift_cubic", Some(0.0))?,
                    )
                    .jumps(
                        param(p, "small_jump_scale", Some(0.0))?,
                        param(p, "big_jump_scale", Some(0.0))?,
                    ),
            ))
        });
        r
    }

    /// Registration hook for custom families.
    pub fn register<F>(&mut self, name: &str, ctor: F)
    where
        F: Fn(usize, f64, &FamilyParams) -> Result<Arc<dyn Coefficients>> + Send + Sync + 'static,
    {
        self.ctors.insert(name.to_string(), Box::new(ctor));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.ctors.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.ctors.contains_key(name)
    }

    pub fn build(
        &self,
        name: &str,
        dim: usize,
        beta: f64,
        params: &FamilyParams,
    ) -> Result<Arc<dyn Coefficients>> {
        let ctor = self
            .ctors
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown model family `{name}`")))?;
        ctor(dim, beta, params)
    }
}

/// `⟨x, b(x, μ)⟩`, used by the coercivity checks.
pub(crate) fn drift_inner(coeffs: &dyn Coefficients, x: &[f64], mu: &EmpiricalMeasure) -> f64 {
    let mut b = vec![0.0; x.len()];
    coeffs.drift(x, mu, &mut b);
    dot(x, &b)
}
