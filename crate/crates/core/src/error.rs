use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("integrability error: {0}")]
    Integrability(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cloud size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("exact solver cap exceeded: n = {n} > {cap}; use the sliced estimator")]
    CapExceeded { n: usize, cap: usize },

    #[error("grid mismatch between measure flows")]
    GridMismatch,

    #[error("divergence at t = {time} (particle {particle}): |x| = {norm:e}")]
    Divergence {
        time: f64,
        particle: usize,
        norm: f64,
    },

    #[error("no convergence after {iterations} iterations (last distance {last:e})")]
    NoConvergence {
        iterations: usize,
        last: f64,
        trace: Vec<f64>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
