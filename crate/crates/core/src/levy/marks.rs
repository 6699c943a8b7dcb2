//! Mark laws for the jump bands.
//!
//! Every built-in law is radially symmetric: the radius follows a declared
//! one-dimensional law and the direction is uniform on the unit sphere.

use std::fmt::Debug;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};

/// Sampler for the normalized mark law of one band.
pub trait MarkSampler: Debug + Send + Sync {
    fn name(&self) -> &str;

    /// Writes one mark into `out` (length = dimension).
    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);

    /// Closed interval containing every sampled radius.
    fn radius_bounds(&self) -> (f64, f64);

    /// `E[Z]` under the normalized law, when known in closed form.
    fn mean(&self, dim: usize) -> Option<Vec<f64>>;

    /// `E|Z|^q`, when known (closed form or deterministic quadrature).
    fn radial_moment(&self, dim: usize, q: f64) -> Option<f64>;

    /// `P(|Z| <= r)`, when known.
    fn radial_cdf(&self, dim: usize, r: f64) -> Option<f64>;
}

fn direction_into(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut s = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            s += *v * *v;
        }
        if s > 1e-300 {
            let inv = 1.0 / s.sqrt();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

/// Uniform (Lebesgue) law on `{inner <= |z| <= outer}`; a sphere when the radii agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
}

impl Annulus {
    pub fn new(inner: f64, outer: f64) -> Self {
        Self { inner, outer }
    }

    pub fn sphere(radius: f64) -> Self {
        Self::new(radius, radius)
    }
}

impl MarkSampler for Annulus {
    fn name(&self) -> &str {
        "annulus"
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let d = out.len() as f64;
        let r = if self.outer > self.inner {
            let u: f64 = rng.random();
            let a = self.inner.powf(d);
            let b = self.outer.powf(d);
            (a + u * (b - a)).powf(1.0 / d)
        } else {
            self.inner
        };
        direction_into(rng, out);
        out.iter_mut().for_each(|v| *v *= r);
    }

    fn radius_bounds(&self) -> (f64, f64) {
        (self.inner, self.outer)
    }

    fn mean(&self, dim: usize) -> Option<Vec<f64>> {
        Some(vec![0.0; dim])
    }

    fn radial_moment(&self, dim: usize, q: f64) -> Option<f64> {
        if self.outer <= self.inner {
            return Some(self.inner.powf(q));
        }
        let d = dim as f64;
        let (a, b) = (self.inner, self.outer);
        Some(d / (d + q) * (b.powf(d + q) - a.powf(d + q)) / (b.powf(d) - a.powf(d)))
    }

    fn radial_cdf(&self, dim: usize, r: f64) -> Option<f64> {
        if r < self.inner {
            return Some(0.0);
        }
        if r >= self.outer {
            return Some(1.0);
        }
        let d = dim as f64;
        let a = self.inner.powf(d);
        Some((r.powf(d) - a) / (self.outer.powf(d) - a))
    }
}

/// Radius `inner + E` with `E ~ Exp(decay)`, optionally truncated at `outer`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialExponential {
    pub inner: f64,
    pub decay: f64,
    pub outer: Option<f64>,
}

impl RadialExponential {
    pub fn new(inner: f64, decay: f64) -> Self {
        Self {
            inner,
            decay,
            outer: None,
        }
    }

    pub fn truncated(inner: f64, decay: f64, outer: f64) -> Self {
        Self {
            inner,
            decay,
            outer: Some(outer),
        }
    }

    /// Probability mass kept by the truncation.
    fn kept_mass(&self) -> f64 {
        match self.outer {
            Some(b) => -(-self.decay * (b - self.inner)).exp_m1(),
            None => 1.0,
        }
    }
}

impl MarkSampler for RadialExponential {
    fn name(&self) -> &str {
        "radial_exponential"
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let u: f64 = rng.sample(Open01);
        let e = -(-u * self.kept_mass()).ln_1p() / self.decay;
        let r = self.inner + e;
        direction_into(rng, out);
        out.iter_mut().for_each(|v| *v *= r);
    }

    fn radius_bounds(&self) -> (f64, f64) {
        (self.inner, self.outer.unwrap_or(f64::INFINITY))
    }

    fn mean(&self, dim: usize) -> Option<Vec<f64>> {
        Some(vec![0.0; dim])
    }

    fn radial_moment(&self, _dim: usize, q: f64) -> Option<f64> {
        // Composite Simpson on the excess E over [0, upper].
        let lam = self.decay;
        let upper = match self.outer {
            Some(b) => (b - self.inner).min(80.0 / lam),
            None => 80.0 / lam,
        };
        let steps = 40_000usize;
        let h = upper / steps as f64;
        let density = |e: f64| (self.inner + e).powf(q) * lam * (-lam * e).exp();
        let mut acc = density(0.0) + density(upper);
        for k in 1..steps {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * density(k as f64 * h);
        }
        Some(acc * h / 3.0 / self.kept_mass())
    }

    fn radial_cdf(&self, _dim: usize, r: f64) -> Option<f64> {
        if r <= self.inner {
            return Some(0.0);
        }
        if let Some(b) = self.outer {
            if r >= b {
                return Some(1.0);
            }
        }
        Some(-(-self.decay * (r - self.inner)).exp_m1() / self.kept_mass())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sphere_marks_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = Annulus::sphere(1.0);
        let mut z = [0.0; 3];
        for _ in 0..100 {
            s.sample_into(&mut rng, &mut z);
            assert!((crate::numeric::norm(&z) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_second_moment_matches_closed_form() {
        let law = RadialExponential::new(1.0, 4.0);
        let exact = 1.0 + 2.0 / 4.0 + 2.0 / 16.0;
        assert!((law.radial_moment(1, 2.0).unwrap() - exact).abs() < 1e-10);
    }

    #[test]
    fn annulus_moment_matches_monte_carlo() {
        let law = Annulus::new(0.5, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut z = [0.0; 2];
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            law.sample_into(&mut rng, &mut z);
            acc += crate::numeric::norm_sq(&z);
        }
        let mc = acc / n as f64;
        let exact = law.radial_moment(2, 2.0).unwrap();
        assert!((mc - exact).abs() < 0.01, "{mc} vs {exact}");
    }

    #[test]
    fn truncated_exponential_stays_in_range() {
        let law = RadialExponential::truncated(0.1, 3.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut z = [0.0; 1];
        for _ in 0..10_000 {
            law.sample_into(&mut rng, &mut z);
            let r = z[0].abs();
            assert!(r > 0.1 && r <= 1.0 + 1e-12);
        }
        assert!((law.radial_cdf(1, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }
}
