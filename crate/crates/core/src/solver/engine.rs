//! Euler stepping with interlaced big jumps, shared by every simulator.
//!
//! Over one base step `[t_k, t_{k+1})` a particle sees a single cloud (the
//! frozen flow at `t_k`, or the snapshot of the interacting system at `t_k`).
//! Big-jump times inside the step split it into Euler substeps; each substep
//! freezes the coefficients at its starting state, adds the small-jump
//! increments of the events in `(s, u]` and subtracts `(u - s)` times the
//! small-jump compensator. At a big-jump time the `g` increment is added to
//! the pre-jump state. The last base step is closed on the right.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::levy::{sample_big_jumps, Band, JumpEvent, LevyModel, PoissonClock};
use crate::model::coeffs::{common_small_jump_compensator, small_jump_compensator, Coefficients};
use crate::model::measure::{EmpiricalMeasure, MeasureFlow};
use crate::numeric::norm;
use crate::solver::grid::TimeGrid;
use crate::stream::{Layer, NoiseStream};

/// States beyond this norm abort the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// One realization of the common noise on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CommonPath {
    pub small: Vec<JumpEvent>,
    pub big: Vec<JumpEvent>,
}

impl CommonPath {
    pub fn sample(stream: &NoiseStream, levy: &LevyModel, horizon: f64) -> Result<Self> {
        let big = sample_big_jumps(&stream.with_layer(Layer::CommonBigJumps), horizon, levy)?;
        let mut small = Vec::new();
        if levy.rate(Band::U) > 0.0 {
            let s = stream.with_layer(Layer::CommonSmallJumps);
            let mut clock = PoissonClock::new(&s, levy.rate(Band::U), levy.marks(Band::U));
            let mut mark = vec![0.0; levy.dim()];
            loop {
                let t = clock.next_into(&mut mark);
                if t > horizon {
                    break;
                }
                small.push(JumpEvent {
                    time: t,
                    mark: mark.clone(),
                    band: Band::U,
                });
            }
        }
        Ok(Self { small, big })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedJump {
    pub time: f64,
    pub mark: Vec<f64>,
    pub pre_state: Vec<f64>,
    pub increment: Vec<f64>,
    pub common: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct PathLog {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub jumps: Vec<AppliedJump>,
}

impl PathLog {
    fn push(&mut self, t: f64, x: &[f64]) {
        if self.times.last() == Some(&t) {
            let d = x.len();
            let n = self.states.len();
            self.states[n - d..].copy_from_slice(x);
        } else {
            self.times.push(t);
            self.states.extend_from_slice(x);
        }
    }
}

/// Everything a particle needs besides its own noise.
pub(crate) struct Dynamics<'a> {
    pub coeffs: &'a dyn Coefficients,
    pub levy: &'a LevyModel,
    small_mean: Vec<f64>,
    common: Option<CommonLayer<'a>>,
}

struct CommonLayer<'a> {
    levy: &'a LevyModel,
    path: &'a CommonPath,
    small_mean: Vec<f64>,
}

impl<'a> Dynamics<'a> {
    pub fn new(coeffs: &'a dyn Coefficients, levy: &'a LevyModel) -> Self {
        Self {
            coeffs,
            levy,
            small_mean: levy.small_mean(),
            common: None,
        }
    }

    /// Attaches a common layer; silent layers are dropped so the dynamics
    /// stay bit-identical to the single-noise case.
    pub fn with_common(mut self, levy: &'a LevyModel, path: &'a CommonPath) -> Self {
        if !levy.is_silent() {
            self.common = Some(CommonLayer {
                levy,
                path,
                small_mean: levy.small_mean(),
            });
        }
        self
    }
}

pub(crate) struct Particle<'a> {
    index: usize,
    pub x: Vec<f64>,
    small: PoissonClock<'a>,
    next_small: f64,
    next_mark: Vec<f64>,
    big: Vec<JumpEvent>,
    big_pos: usize,
    common_small_pos: usize,
    common_big_pos: usize,
    pub log: Option<PathLog>,
    failed: Option<Error>,
    drift: Vec<f64>,
    buf: Vec<f64>,
    inc: Vec<f64>,
}

enum NextJump {
    Idio,
    Common,
}

impl<'a> Particle<'a> {
    pub fn new(
        dy: &Dynamics<'a>,
        index: usize,
        x0: &[f64],
        stream: &NoiseStream,
        horizon: f64,
        record: bool,
        big: Option<Vec<JumpEvent>>,
    ) -> Result<Self> {
        let d = x0.len();
        let levy = dy.levy;
        let mut small = PoissonClock::new(
            &stream.with_layer(Layer::SmallJumps),
            levy.rate(Band::U),
            levy.marks(Band::U),
        );
        let mut next_mark = vec![0.0; d];
        let next_small = small.next_into(&mut next_mark);
        let big = match big {
            Some(events) => events,
            None => sample_big_jumps(&stream.with_layer(Layer::BigJumps), horizon, levy)?,
        };
        let log = record.then(|| {
            let mut l = PathLog::default();
            l.push(0.0, x0);
            l
        });
        Ok(Self {
            index,
            x: x0.to_vec(),
            small,
            next_small,
            next_mark,
            big,
            big_pos: 0,
            common_small_pos: 0,
            common_big_pos: 0,
            log,
            failed: None,
            drift: vec![0.0; d],
            buf: vec![0.0; d],
            inc: vec![0.0; d],
        })
    }

    fn check(&self, t: f64) -> Result<()> {
        let n = norm(&self.x);
        if n.is_finite() && n <= DIVERGENCE_THRESHOLD {
            Ok(())
        } else {
            Err(Error::Divergence {
                time: t,
                particle: self.index,
                norm: n,
            })
        }
    }

    fn substep(&mut self, dy: &Dynamics, cloud: &EmpiricalMeasure, s: f64, u: f64) -> Result<()> {
        if !(u > s) {
            return Ok(());
        }
        let dt = u - s;
        let coeffs = dy.coeffs;
        coeffs.drift(&self.x, cloud, &mut self.drift);
        for (i, b) in self.inc.iter_mut().zip(&self.drift) {
            *i = b * dt;
        }
        if dy.levy.rate(Band::U) > 0.0 {
            while self.next_small <= u {
                coeffs.small_jump(&self.x, cloud, &self.next_mark, &mut self.buf);
                self.inc
                    .iter_mut()
                    .zip(&self.buf)
                    .for_each(|(i, f)| *i += f);
                self.next_small = self.small.next_into(&mut self.next_mark);
            }
            small_jump_compensator(
                coeffs,
                dy.levy,
                &self.x,
                cloud,
                &dy.small_mean,
                &mut self.buf,
            );
            self.inc
                .iter_mut()
                .zip(&self.buf)
                .for_each(|(i, c)| *i -= dt * c);
        }
        if let Some(common) = &dy.common {
            if common.levy.rate(Band::U) > 0.0 {
                let events = &common.path.small;
                while self.common_small_pos < events.len()
                    && events[self.common_small_pos].time <= u
                {
                    coeffs.common_small_jump(
                        &self.x,
                        &events[self.common_small_pos].mark,
                        &mut self.buf,
                    );
                    self.inc
                        .iter_mut()
                        .zip(&self.buf)
                        .for_each(|(i, f)| *i += f);
                    self.common_small_pos += 1;
                }
                common_small_jump_compensator(
                    coeffs,
                    common.levy,
                    &self.x,
                    &common.small_mean,
                    &mut self.buf,
                );
                self.inc
                    .iter_mut()
                    .zip(&self.buf)
                    .for_each(|(i, c)| *i -= dt * c);
            }
        }
        self.x.iter_mut().zip(&self.inc).for_each(|(x, i)| *x += i);
        self.check(u)
    }

    fn jump(&mut self, dy: &Dynamics, cloud: &EmpiricalMeasure, which: NextJump) -> Result<f64> {
        let (ev, common) = match which {
            NextJump::Idio => {
                self.big_pos += 1;
                (&self.big[self.big_pos - 1], false)
            }
            NextJump::Common => {
                let path = dy.common.as_ref().expect("common layer").path;
                self.common_big_pos += 1;
                (&path.big[self.common_big_pos - 1], true)
            }
        };
        if common {
            dy.coeffs
                .common_big_jump(&self.x, cloud, &ev.mark, &mut self.buf);
        } else {
            dy.coeffs.big_jump(&self.x, cloud, &ev.mark, &mut self.buf);
        }
        let time = ev.time;
        if let Some(log) = self.log.as_mut() {
            log.jumps.push(AppliedJump {
                time,
                mark: ev.mark.clone(),
                pre_state: self.x.clone(),
                increment: self.buf.clone(),
                common,
            });
        }
        self.x.iter_mut().zip(&self.buf).for_each(|(x, g)| *x += g);
        if let Some(log) = self.log.as_mut() {
            log.push(time, &self.x);
        }
        self.check(time)?;
        Ok(time)
    }

    fn next_jump(&self, dy: &Dynamics, t1: f64, last: bool) -> Option<NextJump> {
        let in_range = |t: f64| t < t1 || (last && t <= t1);
        let idio = self
            .big
            .get(self.big_pos)
            .map(|e| e.time)
            .filter(|t| in_range(*t));
        let common = dy
            .common
            .as_ref()
            .and_then(|c| c.path.big.get(self.common_big_pos))
            .map(|e| e.time)
            .filter(|t| in_range(*t));
        match (idio, common) {
            (Some(a), Some(b)) if b < a => Some(NextJump::Common),
            (Some(_), _) => Some(NextJump::Idio),
            (None, Some(_)) => Some(NextJump::Common),
            (None, None) => None,
        }
    }

    /// Advances over one base step `[t0, t1)` (closed when `last`).
    pub fn advance(
        &mut self,
        dy: &Dynamics,
        cloud: &EmpiricalMeasure,
        t0: f64,
        t1: f64,
        last: bool,
    ) -> Result<()> {
        let mut s = t0;
        while let Some(which) = self.next_jump(dy, t1, last) {
            let t = match &which {
                NextJump::Idio => self.big[self.big_pos].time,
                NextJump::Common => {
                    dy.common.as_ref().expect("common").path.big[self.common_big_pos].time
                }
            };
            self.substep(dy, cloud, s, t)?;
            self.jump(dy, cloud, which)?;
            s = t;
        }
        self.substep(dy, cloud, s, t1)?;
        if let Some(log) = self.log.as_mut() {
            log.push(t1, &self.x);
        }
        Ok(())
    }
}

/// Measure argument seen by the particles.
pub(crate) enum MeasureSource<'a> {
    /// Empirical cloud of the particles themselves, re-formed at every base time.
    Interacting,
    /// A prescribed flow on the base grid.
    Frozen(&'a MeasureFlow),
}

pub(crate) struct EngineOutput {
    /// Per base time, the flat `n × d` states.
    pub states: Vec<Vec<f64>>,
    pub logs: Option<Vec<PathLog>>,
}

impl EngineOutput {
    pub fn flow(&self, grid: &TimeGrid, dim: usize) -> MeasureFlow {
        let clouds = self
            .states
            .iter()
            .map(|s| EmpiricalMeasure::from_finite(dim, s.clone()))
            .collect();
        MeasureFlow::new(grid.times().to_vec(), clouds).expect("engine output is a valid flow")
    }
}

pub(crate) fn run(
    dy: &Dynamics,
    x0: &[Vec<f64>],
    streams: &[NoiseStream],
    grid: &TimeGrid,
    source: MeasureSource,
    record: bool,
    exec: Exec,
) -> Result<EngineOutput> {
    run_with_events(dy, x0, streams, grid, source, record, exec, None)
}

/// As [`run`], optionally replacing each particle's sampled big jumps.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_with_events(
    dy: &Dynamics,
    x0: &[Vec<f64>],
    streams: &[NoiseStream],
    grid: &TimeGrid,
    source: MeasureSource,
    record: bool,
    exec: Exec,
    big: Option<&[Vec<JumpEvent>]>,
) -> Result<EngineOutput> {
    let n = x0.len();
    assert_eq!(n, streams.len(), "one stream per particle");
    let d = dy.coeffs.dim();
    if let Some(bad) = x0.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch {
            left: bad.len(),
            right: d,
        });
    }
    if let MeasureSource::Frozen(flow) = &source {
        if flow.times() != grid.times() {
            return Err(Error::GridMismatch);
        }
        if flow.dim() != d {
            return Err(Error::DimensionMismatch {
                left: flow.dim(),
                right: d,
            });
        }
    }
    let horizon = grid.horizon();
    let mut particles = exec.try_map(n, |i| {
        let forced = big.map(|b| b[i].clone());
        Particle::new(dy, i, &x0[i], &streams[i], horizon, record, forced)
    })?;
    if let Some(p) = particles.iter().find_map(|p| p.check(0.0).err()) {
        return Err(p);
    }
    let times = grid.times();
    let mut states = Vec::with_capacity(times.len());
    states.push(x0.concat());
    let steps = grid.steps();
    for k in 0..steps {
        let snapshot;
        let cloud = match &source {
            MeasureSource::Interacting => {
                snapshot = EmpiricalMeasure::from_finite(d, states[k].clone());
                &snapshot
            }
            MeasureSource::Frozen(flow) => flow.cloud(k),
        };
        let (t0, t1, last) = (times[k], times[k + 1], k + 1 == steps);
        exec.for_each_mut(&mut particles, |_, p| {
            if let Err(e) = p.advance(dy, cloud, t0, t1, last) {
                p.failed = Some(e);
            }
        });
        if let Some(e) = particles.iter_mut().find_map(|p| p.failed.take()) {
            return Err(e);
        }
        let mut next = Vec::with_capacity(n * d);
        for p in &particles {
            next.extend_from_slice(&p.x);
        }
        states.push(next);
    }
    let logs = record.then(|| {
        particles
            .into_iter()
            .map(|p| p.log.expect("recording enabled"))
            .collect()
    });
    Ok(EngineOutput { states, logs })
}
