use std::fmt::Debug;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stream::NoiseStream;

/// Law of the initial state `X_0`.
pub trait InitialLaw: Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);

    /// One draw from a dedicated stream.
    fn draw(&self, stream: &NoiseStream) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(&mut stream.rng(), &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Point(Vec<f64>),
    /// Independent coordinates `N(mean_j, sd²)`.
    Normal {
        mean: Vec<f64>,
        sd: f64,
    },
    /// Independent coordinates uniform on `[low, high]`.
    Uniform {
        dim: usize,
        low: f64,
        high: f64,
    },
}

impl Initial {
    pub fn validate(&self) -> Result<()> {
        match self {
            Initial::Point(v) if v.is_empty() => Err(Error::Config("empty initial point".into())),
            Initial::Normal { mean, sd } if mean.is_empty() || !(*sd >= 0.0) => Err(Error::Config(
                format!("initial normal needs a mean and sd >= 0, got {sd}"),
            )),
            Initial::Uniform { dim, low, high } if *dim == 0 || !(high >= low) => {
                Err(Error::Config(format!(
                    "initial uniform needs low <= high, got [{low}, {high}]"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl InitialLaw for Initial {
    fn dim(&self) -> usize {
        match self {
            Initial::Point(v) => v.len(),
            Initial::Normal { mean, .. } => mean.len(),
            Initial::Uniform { dim, .. } => *dim,
        }
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Initial::Point(v) => out.copy_from_slice(v),
            Initial::Normal { mean, sd } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    let g: f64 = rng.sample(StandardNormal);
                    *o = m + sd * g;
                }
            }
            Initial::Uniform { low, high, .. } => {
                for o in out.iter_mut() {
                    let u: f64 = rng.random();
                    *o = low + (high - low) * u;
                }
            }
        }
    }
}

/// `s · X_0` for an inner law.
#[derive(Debug, Clone)]
pub struct Scaled<L> {
    pub inner: L,
    pub scale: f64,
}

impl<L: InitialLaw> InitialLaw for Scaled<L> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        self.inner.sample_into(rng, out);
        out.iter_mut().for_each(|v| *v *= self.scale);
    }
}

impl<L: InitialLaw + ?Sized> InitialLaw for std::sync::Arc<L> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        (**self).sample_into(rng, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{Layer, StreamId};

    #[test]
    fn point_law_is_deterministic() {
        let s = NoiseStream::new(1, StreamId::new(0, 0, 0, Layer::Initial));
        assert_eq!(Initial::Point(vec![1.0, 2.0]).draw(&s), vec![1.0, 2.0]);
    }

    #[test]
    fn scaling_multiplies_draws() {
        let s = NoiseStream::new(1, StreamId::new(0, 0, 4, Layer::Initial));
        let base = Initial::Normal {
            mean: vec![1.0],
            sd: 0.5,
        };
        let a = base.draw(&s)[0];
        let b = Scaled {
            inner: base.clone(),
            scale: 4.0,
        }
        .draw(&s)[0];
        assert_eq!(4.0 * a, b);
    }

    #[test]
    fn validation() {
        assert!(Initial::Uniform {
            dim: 1,
            low: 1.0,
            high: 0.0
        }
        .validate()
        .is_err());
        assert!(Initial::Normal {
            mean: vec![0.0],
            sd: 1.0
        }
        .validate()
        .is_ok());
    }
}
