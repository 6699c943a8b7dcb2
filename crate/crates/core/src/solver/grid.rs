use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform base grid `0 = t_0 < t_1 < ... < t_M = T` with step `h`
/// (the last step is shortened when `h` does not divide `T`).
///
/// Paths refine it with their own big-jump times; see [`PathSolution`](super::PathSolution).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    step: f64,
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Config(format!("step must be positive, got {step}")));
        }
        let m = ((horizon / step) - 1e-9).ceil().max(1.0) as usize;
        let mut times: Vec<f64> = (0..m).map(|k| k as f64 * step).collect();
        times.push(horizon);
        Ok(Self {
            horizon,
            step,
            times,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Uniform points merged with extra event times, sorted and deduplicated.
    pub fn realize(&self, events: &[f64]) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .times
            .iter()
            .copied()
            .chain(
                events
                    .iter()
                    .copied()
                    .filter(|t| *t >= 0.0 && *t <= self.horizon),
            )
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}
