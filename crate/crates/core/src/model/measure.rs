use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, norm};

/// Uniform-weight point cloud in `R^d`, stored row-major.
///
/// The mean and the mean squared deviation from it are cached on
/// construction; kernels with a quadratic structure use them to evaluate
/// interaction terms in O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    mean: Vec<f64>,
    spread: f64,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::Domain(format!(
                "cloud needs n >= 1 points of dimension {dim}, got {} values",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("cloud contains non-finite points".into()));
        }
        Ok(Self::from_finite(dim, points))
    }

    /// Builds the cloud without the finiteness scan; callers guarantee finite input.
    pub(crate) fn from_finite(dim: usize, points: Vec<f64>) -> Self {
        let n = points.len() / dim;
        let mut mean = vec![0.0; dim];
        for j in 0..dim {
            mean[j] = compensated_sum((0..n).map(|i| points[i * dim + j])) / n as f64;
        }
        let spread = compensated_sum(points.chunks(dim).map(|p| {
            p.iter()
                .zip(&mean)
                .map(|(a, m)| (a - m) * (a - m))
                .sum::<f64>()
        })) / n as f64;
        Self {
            dim,
            points,
            mean,
            spread,
        }
    }

    pub fn dirac(x: &[f64]) -> Self {
        Self::from_finite(x.len(), x.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::Chunks<'_, f64> {
        self.points.chunks(self.dim)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `(1/n) Σ |x_i - mean|²`.
    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// Same cloud shifted by `v`.
    pub fn translated(&self, v: &[f64]) -> Self {
        let pts = self
            .points
            .chunks(self.dim)
            .flat_map(|p| p.iter().zip(v).map(|(a, b)| a + b))
            .collect();
        Self::from_finite(self.dim, pts)
    }
}

/// `μ(|·|^β)^{1/β}`.
pub fn beta_norm(mu: &EmpiricalMeasure, beta: f64) -> f64 {
    let n = mu.len() as f64;
    let s = compensated_sum(mu.iter().map(|p| norm(p).powf(beta))) / n;
    s.powf(1.0 / beta)
}

/// Lipschitz interaction kernel `h: R^d -> R^d`.
#[derive(Clone)]
pub enum Kernel {
    /// `h(x) = scale · x`.
    Linear(f64),
    Custom {
        map: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
        lipschitz: f64,
    },
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Linear(s) => write!(f, "Linear({s})"),
            Kernel::Custom { lipschitz, .. } => write!(f, "Custom(lip = {lipschitz})"),
        }
    }
}

impl Kernel {
    pub fn lipschitz(&self) -> f64 {
        match self {
            Kernel::Linear(s) => s.abs(),
            Kernel::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Kernel::Linear(s) if *s == 0.0)
    }
}

/// `μ(|h(x - ·)|^β)^{1/β}`.
pub fn interaction_term(mu: &EmpiricalMeasure, x: &[f64], kernel: &Kernel, beta: f64) -> f64 {
    match kernel {
        Kernel::Linear(s) if *s == 0.0 => 0.0,
        Kernel::Linear(s) if beta == 2.0 => {
            // (1/n) Σ |x - y_j|² = |x - mean|² + spread
            let d2: f64 = x
                .iter()
                .zip(mu.mean())
                .map(|(a, m)| (a - m) * (a - m))
                .sum();
            s.abs() * (d2 + mu.spread()).sqrt()
        }
        Kernel::Linear(s) => {
            let n = mu.len() as f64;
            let acc = compensated_sum(mu.iter().map(|y| {
                let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                d.sqrt().powf(beta)
            }));
            s.abs() * (acc / n).powf(1.0 / beta)
        }
        Kernel::Custom { map, .. } => {
            let n = mu.len() as f64;
            let mut diff = vec![0.0; x.len()];
            let mut out = vec![0.0; x.len()];
            let acc = compensated_sum(mu.iter().map(|y| {
                for ((d, a), b) in diff.iter_mut().zip(x).zip(y) {
                    *d = a - b;
                }
                map(&diff, &mut out);
                norm(&out).powf(beta)
            }));
            (acc / n).powf(1.0 / beta)
        }
    }
}

/// `(1 + |x|²)^{β/2}`.
pub fn lyapunov_diagnostic(x: &[f64], beta: f64) -> f64 {
    (1.0 + crate::numeric::norm_sq(x)).powf(beta / 2.0)
}

/// Time-indexed sequence of clouds representing `t ↦ μ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFlow {
    times: Vec<f64>,
    clouds: Vec<EmpiricalMeasure>,
}

impl MeasureFlow {
    pub fn new(times: Vec<f64>, clouds: Vec<EmpiricalMeasure>) -> Result<Self> {
        if times.is_empty() || times.len() != clouds.len() {
            return Err(Error::Domain(format!(
                "flow needs one cloud per grid time ({} times, {} clouds)",
                times.len(),
                clouds.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "flow grid must be strictly increasing".into(),
            ));
        }
        let d = clouds[0].dim();
        if clouds.iter().any(|c| c.dim() != d) {
            return Err(Error::Domain("flow clouds differ in dimension".into()));
        }
        Ok(Self { times, clouds })
    }

    /// The same cloud at every grid time.
    pub fn constant(times: Vec<f64>, cloud: EmpiricalMeasure) -> Result<Self> {
        let clouds = vec![cloud; times.len()];
        Self::new(times, clouds)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn clouds(&self) -> &[EmpiricalMeasure] {
        &self.clouds
    }

    pub fn cloud(&self, k: usize) -> &EmpiricalMeasure {
        &self.clouds[k]
    }

    pub fn last(&self) -> &EmpiricalMeasure {
        self.clouds.last().expect("flow is non-empty")
    }

    pub fn dim(&self) -> usize {
        self.clouds[0].dim()
    }

    /// Cloud at the last grid time `<= t` (left-continuous piecewise constant lookup).
    pub fn at(&self, t: f64) -> &EmpiricalMeasure {
        let k = self.times.partition_point(|s| *s <= t).max(1) - 1;
        &self.clouds[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pts: &[f64], d: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(d, pts.to_vec()).unwrap()
    }

    #[test]
    fn beta_norm_examples() {
        assert_eq!(beta_norm(&cloud(&[0.0], 1), 1.5), 0.0);
        assert_eq!(beta_norm(&cloud(&[3.0, 4.0], 2), 1.0), 5.0);
        assert!((beta_norm(&cloud(&[0.0, 2.0], 1), 2.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn interaction_examples() {
        let mu = cloud(&[1.0, -1.0], 1);
        assert_eq!(
            interaction_term(&mu, &[0.0], &Kernel::Linear(0.0), 2.0),
            0.0
        );
        assert!((interaction_term(&mu, &[0.0], &Kernel::Linear(1.0), 2.0) - 1.0).abs() < 1e-15);
        let dirac = EmpiricalMeasure::dirac(&[1.0, 2.0]);
        for beta in [1.0, 1.5, 2.0] {
            let v = interaction_term(&dirac, &[4.0, 6.0], &Kernel::Linear(1.0), beta);
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fast_path_matches_direct_sum() {
        let mu = cloud(&[0.3, -1.2, 2.5, 0.7, 1.1, -0.4], 2);
        let custom = Kernel::Custom {
            map: Arc::new(|x: &[f64], out: &mut [f64]| out.copy_from_slice(x)),
            lipschitz: 1.0,
        };
        let x = [0.9, -0.2];
        let fast = interaction_term(&mu, &x, &Kernel::Linear(1.0), 2.0);
        let slow = interaction_term(&mu, &x, &custom, 2.0);
        assert!((fast - slow).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov_diagnostic(&[0.0, 0.0], 1.3), 1.0);
        assert!((lyapunov_diagnostic(&[1.0, 1.0, 1.0], 2.0) - 4.0).abs() < 1e-14);
        assert!((lyapunov_diagnostic(&[1.0], 1.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_clouds_rejected() {
        assert!(EmpiricalMeasure::new(1, vec![]).is_err());
        assert!(EmpiricalMeasure::new(2, vec![1.0]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn flow_lookup_is_left_continuous() {
        let f = MeasureFlow::new(
            vec![0.0, 0.5, 1.0],
            vec![cloud(&[0.0], 1), cloud(&[1.0], 1), cloud(&[2.0], 1)],
        )
        .unwrap();
        assert_eq!(f.at(0.49).points(), &[0.0]);
        assert_eq!(f.at(0.5).points(), &[1.0]);
        assert_eq!(f.at(1.0).points(), &[2.0]);
    }
}
