//! Jump noise split into a compensated small-jump band `U = {0 < |z| <= r}` and
//! a finite-intensity big-jump band `V = {|z| > r}`.
//!
//! Both bands are driven by Poisson clocks: exponential inter-arrival gaps of
//! the band rate, each followed by an i.i.d. mark from the band's mark law.
//! Gaps and marks are drawn interleaved from one stream, so the events up to
//! any time `t` are a prefix of the events up to any later time.

pub mod marks;

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean_and_se, norm};
use crate::stream::{Layer, NoiseStream, StreamId};

pub use marks::{Annulus, MarkSampler, RadialExponential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    U,
    V,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: Vec<f64>,
    pub band: Band,
}

#[derive(Debug, Clone)]
pub enum SmallBand {
    FiniteActivity {
        rate: f64,
        marks: Arc<dyn MarkSampler>,
    },
    /// Activity restricted to `{epsilon < |z| <= r}`; jumps below `epsilon`
    /// are dropped, which biases the small-jump integral.
    Truncated {
        epsilon: f64,
        rate: f64,
        marks: Arc<dyn MarkSampler>,
        bias_note: String,
    },
}

impl SmallBand {
    pub fn rate(&self) -> f64 {
        match self {
            SmallBand::FiniteActivity { rate, .. } | SmallBand::Truncated { rate, .. } => *rate,
        }
    }

    pub fn marks(&self) -> &Arc<dyn MarkSampler> {
        match self {
            SmallBand::FiniteActivity { marks, .. } | SmallBand::Truncated { marks, .. } => marks,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BigBand {
    pub rate: f64,
    pub marks: Arc<dyn MarkSampler>,
}

#[derive(Debug, Clone)]
pub struct LevyModel {
    dim: usize,
    split_radius: f64,
    small: SmallBand,
    big: BigBand,
    quadrature_u: Arc<OnceLock<Vec<f64>>>,
    quadrature_v: Arc<OnceLock<Vec<f64>>>,
}

/// Marks used by the deterministic quadrature fallback of [`LevyModel::band_quadrature`].
pub const QUADRATURE_MARKS: usize = 4096;

impl LevyModel {
    pub fn new(dim: usize, split_radius: f64, small: SmallBand, big: BigBand) -> Result<Self> {
        let mut errs = Vec::new();
        if dim == 0 {
            errs.push("dimension must be positive".to_string());
        }
        if !(split_radius.is_finite() && split_radius > 0.0) {
            errs.push(format!("split radius must be positive, got {split_radius}"));
        }
        let (lo_u, hi_u) = small.marks().radius_bounds();
        match &small {
            SmallBand::FiniteActivity { rate, .. } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    errs.push(format!(
                        "small-band rate must be finite and >= 0, got {rate}"
                    ));
                }
                if *rate > 0.0 && !(lo_u > 0.0) {
                    errs.push("small-band marks must avoid the origin".to_string());
                }
            }
            SmallBand::Truncated { epsilon, rate, .. } => {
                if !(epsilon.is_finite() && *epsilon > 0.0) {
                    errs.push(format!(
                        "truncation epsilon must be positive, got {epsilon}"
                    ));
                }
                if !(rate.is_finite() && *rate >= 0.0) {
                    errs.push(format!(
                        "small-band rate must be finite and >= 0, got {rate}"
                    ));
                }
                if *rate > 0.0 && lo_u < *epsilon {
                    errs.push(format!(
                        "truncated small-band marks must satisfy |z| >= epsilon = {epsilon}"
                    ));
                }
            }
        }
        if small.rate() > 0.0 && hi_u > split_radius {
            errs.push(format!(
                "small-band marks reach |z| = {hi_u} beyond split radius {split_radius}"
            ));
        }
        if !(big.rate.is_finite() && big.rate >= 0.0) {
            errs.push(format!(
                "big-band rate must be finite and >= 0, got {}",
                big.rate
            ));
        }
        if big.rate > 0.0 && big.marks.radius_bounds().0 < split_radius {
            errs.push(format!(
                "big-band marks must satisfy |z| > split radius {split_radius}"
            ));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs.join("; ")));
        }
        Ok(Self {
            dim,
            split_radius,
            small,
            big,
            quadrature_u: Arc::default(),
            quadrature_v: Arc::default(),
        })
    }

    /// Noise with both rates zero.
    pub fn silent(dim: usize) -> Self {
        Self::new(
            dim,
            1.0,
            SmallBand::FiniteActivity {
                rate: 0.0,
                marks: Arc::new(Annulus::sphere(0.5)),
            },
            BigBand {
                rate: 0.0,
                marks: Arc::new(Annulus::sphere(2.0)),
            },
        )
        .expect("silent model is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn split_radius(&self) -> f64 {
        self.split_radius
    }

    pub fn small(&self) -> &SmallBand {
        &self.small
    }

    pub fn big(&self) -> &BigBand {
        &self.big
    }

    pub fn rate(&self, band: Band) -> f64 {
        match band {
            Band::U => self.small.rate(),
            Band::V => self.big.rate,
        }
    }

    pub fn marks(&self, band: Band) -> &dyn MarkSampler {
        match band {
            Band::U => self.small.marks().as_ref(),
            Band::V => self.big.marks.as_ref(),
        }
    }

    pub fn is_silent(&self) -> bool {
        self.small.rate() == 0.0 && self.big.rate == 0.0
    }

    /// Copy of this model with the big-jump band removed.
    pub fn without_big_jumps(&self) -> Self {
        Self {
            big: BigBand {
                rate: 0.0,
                marks: self.big.marks.clone(),
            },
            quadrature_v: Arc::default(),
            ..self.clone()
        }
    }

    /// `m_U = ∫_U z ν(dz)`; zero-rate bands give the zero vector.
    pub fn small_mean(&self) -> Vec<f64> {
        let rate = self.small.rate();
        if rate == 0.0 {
            return vec![0.0; self.dim];
        }
        match self.small.marks().mean(self.dim) {
            Some(m) => m.into_iter().map(|v| rate * v).collect(),
            None => {
                let q = self.band_quadrature(Band::U);
                let k = q.len() / self.dim;
                (0..self.dim)
                    .map(|j| rate * (0..k).map(|i| q[i * self.dim + j]).sum::<f64>() / k as f64)
                    .collect()
            }
        }
    }

    /// `ν(|z|^q 1_band)`, exact when the mark law registers the radial moment.
    pub fn norm_moment(&self, band: Band, q: f64) -> Result<f64> {
        let rate = self.rate(band);
        if rate == 0.0 {
            return Ok(0.0);
        }
        let m = match self.marks(band).radial_moment(self.dim, q) {
            Some(m) => m,
            None => {
                let pts = self.band_quadrature(band);
                pts.chunks(self.dim).map(|z| norm(z).powf(q)).sum::<f64>()
                    / (pts.len() / self.dim) as f64
            }
        };
        let v = rate * m;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Integrability(format!(
                "nu(|z|^{q} 1_{band:?}) is not finite"
            )))
        }
    }

    /// `ν((1 ∨ |z|^β) 1_V)`.
    pub fn beta_moment_v(&self, beta: f64) -> Result<f64> {
        let rate = self.big.rate;
        if rate == 0.0 {
            return Ok(0.0);
        }
        let lo = self.big.marks.radius_bounds().0;
        // Radii in V exceed the split radius; when that is >= 1 the max is |z|^β.
        if lo >= 1.0 {
            return self.norm_moment(Band::V, beta);
        }
        let pts = self.band_quadrature(Band::V);
        let k = pts.len() / self.dim;
        let m = pts
            .chunks(self.dim)
            .map(|z| norm(z).powf(beta).max(1.0))
            .sum::<f64>()
            / k as f64;
        Ok(rate * m)
    }

    /// Fixed deterministic sample of normalized marks for the band (flat, `dim` per mark).
    pub fn band_quadrature(&self, band: Band) -> &[f64] {
        let cell = match band {
            Band::U => &self.quadrature_u,
            Band::V => &self.quadrature_v,
        };
        cell.get_or_init(|| {
            let stream =
                NoiseStream::new(0x5155_4144, StreamId::new(0, 0, band as u64, Layer::Aux(0)));
            let mut rng = stream.rng();
            let mut out = vec![0.0; QUADRATURE_MARKS * self.dim];
            for z in out.chunks_mut(self.dim) {
                self.marks(band).sample_into(&mut rng, z);
            }
            out
        })
    }
}

/// Sequential Poisson clock: exponential gaps, each followed by a mark.
pub struct PoissonClock<'a> {
    rng: ChaCha8Rng,
    rate: f64,
    marks: &'a dyn MarkSampler,
    time: f64,
}

impl<'a> PoissonClock<'a> {
    pub fn new(stream: &NoiseStream, rate: f64, marks: &'a dyn MarkSampler) -> Self {
        Self {
            rng: stream.rng(),
            rate,
            marks,
            time: 0.0,
        }
    }

    /// Time of the next event; its mark is written into `mark`. Returns
    /// `f64::INFINITY` when the rate is zero.
    pub fn next_into(&mut self, mark: &mut [f64]) -> f64 {
        if self.rate == 0.0 {
            return f64::INFINITY;
        }
        let u: f64 = self.rng.sample(Open01);
        self.time += -u.ln() / self.rate;
        self.marks.sample_into(&mut self.rng, mark);
        self.time
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("non-finite jump intensity {rate}")))
    }
}

/// Big-jump events on `(0, horizon]`, sorted ascending.
pub fn sample_big_jumps(
    stream: &NoiseStream,
    horizon: f64,
    model: &LevyModel,
) -> Result<Vec<JumpEvent>> {
    check_rate(model.big.rate)?;
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let mut clock = PoissonClock::new(stream, model.big.rate, model.big.marks.as_ref());
    let mut out = Vec::new();
    let mut mark = vec![0.0; model.dim];
    loop {
        let t = clock.next_into(&mut mark);
        if t > horizon {
            return Ok(out);
        }
        out.push(JumpEvent {
            time: t,
            mark: mark.clone(),
            band: Band::V,
        });
    }
}

/// Small-jump events on `(t0, t1]` plus the raw mark compensator `(t1 - t0) m_U`.
pub fn sample_small_jumps(
    stream: &NoiseStream,
    interval: (f64, f64),
    model: &LevyModel,
) -> Result<(Vec<JumpEvent>, Vec<f64>)> {
    let (t0, t1) = interval;
    if !(t1 > t0) {
        return Err(Error::Domain(format!("empty interval [{t0}, {t1}]")));
    }
    check_rate(model.small.rate())?;
    let mut clock = PoissonClock::new(stream, model.small.rate(), model.small.marks().as_ref());
    let mut out = Vec::new();
    let mut mark = vec![0.0; model.dim];
    loop {
        let t = clock.next_into(&mut mark);
        if t > t1 {
            break;
        }
        if t > t0 {
            out.push(JumpEvent {
                time: t,
                mark: mark.clone(),
                band: Band::U,
            });
        }
    }
    let comp = model
        .small_mean()
        .into_iter()
        .map(|m| (t1 - t0) * m)
        .collect();
    Ok((out, comp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuEstimate {
    pub value: f64,
    pub se: f64,
}

pub const DEFAULT_NU_SAMPLES: usize = 1_000_000;

/// `ν(integrand 1_band)` as `λ_band · E[integrand(Z)]` by Monte Carlo.
pub fn nu_expectation<F>(
    model: &LevyModel,
    band: Band,
    integrand: F,
    samples: usize,
    stream: &NoiseStream,
) -> Result<NuEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    let rate = model.rate(band);
    if rate == 0.0 {
        return Ok(NuEstimate {
            value: 0.0,
            se: 0.0,
        });
    }
    let mut rng = stream.rng();
    let mut z = vec![0.0; model.dim];
    let vals: Vec<f64> = (0..samples.max(1))
        .map(|_| {
            model.marks(band).sample_into(&mut rng, &mut z);
            integrand(&z)
        })
        .collect();
    let (mean, se) = mean_and_se(&vals);
    let value = rate * mean;
    if !value.is_finite() {
        return Err(Error::Integrability(format!(
            "non-finite nu-expectation on band {band:?}"
        )));
    }
    Ok(NuEstimate {
        value,
        se: rate * se,
    })
}
