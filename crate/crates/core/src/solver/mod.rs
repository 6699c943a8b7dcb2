//! Decoupled integration, Picard iteration over measure flows, and the
//! interacting particle system with its synchronous coupling.

pub(crate) mod engine;
pub mod grid;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::levy::{JumpEvent, LevyModel};
use crate::model::coeffs::Coefficients;
use crate::model::initial::InitialLaw;
use crate::model::measure::{EmpiricalMeasure, MeasureFlow};
use crate::numeric::dist;
use crate::stream::{Layer, NoiseStream, StreamId};
use crate::wasserstein::flow_distance;

pub use engine::{AppliedJump, CommonPath, DIVERGENCE_THRESHOLD};
pub use grid::TimeGrid;

use engine::{run, run_with_events, Dynamics, EngineOutput, MeasureSource, PathLog};

/// One solution path on its realized grid (base points plus its own jump
/// times). At a jump time the stored state is the post-jump value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    pub grid: TimeGrid,
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub jumps: Vec<AppliedJump>,
}

impl PathSolution {
    fn from_log(grid: &TimeGrid, dim: usize, log: PathLog) -> Self {
        Self {
            grid: grid.clone(),
            dim,
            times: log.times,
            states: log.states,
            jumps: log.jumps,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Right-continuous value `X_t`.
    pub fn at(&self, t: f64) -> &[f64] {
        let k = self.times.partition_point(|s| *s <= t).max(1) - 1;
        self.state(k)
    }

    /// Left limit `X_{t-}`: the pre-jump state at a jump time, `X_t` elsewhere.
    pub fn left_limit(&self, t: f64) -> Vec<f64> {
        match self.jumps.iter().rev().find(|j| j.time == t) {
            Some(first) => {
                // Several jumps may share a time; the earliest carries the true pre-state.
                let earliest = self.jumps.iter().find(|j| j.time == t).unwrap_or(first);
                earliest.pre_state.clone()
            }
            None => self.at(t).to_vec(),
        }
    }

    /// The path with every big-jump increment removed from later states.
    pub fn without_jumps(&self) -> Vec<f64> {
        let mut out = self.states.clone();
        for j in &self.jumps {
            let start = self.times.partition_point(|s| *s < j.time);
            for k in start..self.len() {
                for (c, g) in j.increment.iter().enumerate() {
                    out[k * self.dim + c] -= g;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub step: f64,
    /// Monte Carlo path count for Picard.
    pub paths: usize,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Reuse the same noise in every Picard iteration.
    pub common_random_numbers: bool,
    pub seed: u64,
    pub experiment: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl SolverConfig {
    pub fn new(step: f64, paths: usize, seed: u64) -> Self {
        Self {
            step,
            paths,
            gamma: 0.0,
            tolerance: 1e-3,
            max_iterations: 20,
            common_random_numbers: true,
            seed,
            experiment: 0,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.step.is_finite() && self.step > 0.0) {
            bad.push(format!("step must be positive, got {}", self.step));
        }
        if self.paths < 1 {
            bad.push("path count must be at least 1".to_string());
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            bad.push(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if !(self.tolerance > 0.0) {
            bad.push(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn grid(&self, horizon: f64) -> Result<TimeGrid> {
        TimeGrid::new(horizon, self.step)
    }
}

/// Initial states and per-particle noise streams for a batch of particles.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub x0: Vec<Vec<f64>>,
    pub streams: Vec<NoiseStream>,
}

impl Ensemble {
    /// Particle `i` draws `X_0` from `(experiment, replica, i, Initial)` and
    /// its jumps from `(experiment, replica, i, *)`.
    pub fn draw(
        initial: &dyn InitialLaw,
        n: usize,
        seed: u64,
        experiment: u64,
        replica: u64,
    ) -> Self {
        let x0 = (0..n)
            .map(|i| {
                initial.draw(&NoiseStream::new(
                    seed,
                    StreamId::new(experiment, replica, i as u64, Layer::Initial),
                ))
            })
            .collect();
        Self {
            x0,
            streams: Self::streams(n, seed, experiment, replica),
        }
    }

    pub fn streams(n: usize, seed: u64, experiment: u64, replica: u64) -> Vec<NoiseStream> {
        (0..n)
            .map(|i| {
                NoiseStream::new(
                    seed,
                    StreamId::new(experiment, replica, i as u64, Layer::SmallJumps),
                )
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    /// Reorders particles: new particle `i` is old particle `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            x0: perm.iter().map(|&i| self.x0[i].clone()).collect(),
            streams: perm.iter().map(|&i| self.streams[i]).collect(),
        }
    }

    pub fn initial_cloud(&self) -> Result<EmpiricalMeasure> {
        let dim = self.x0.first().map_or(0, Vec::len);
        EmpiricalMeasure::new(dim, self.x0.concat())
    }
}

/// States of a batch of particles on the base grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    pub grid: TimeGrid,
    pub dim: usize,
    /// Flat `n × d` states per base time.
    pub states: Vec<Vec<f64>>,
    /// Full paths when recording was requested.
    pub paths: Option<Vec<PathSolution>>,
}

impl ParticleRun {
    pub(crate) fn from_engine(grid: &TimeGrid, dim: usize, out: EngineOutput) -> Self {
        let paths = out.logs.map(|logs| {
            logs.into_iter()
                .map(|l| PathSolution::from_log(grid, dim, l))
                .collect()
        });
        Self {
            grid: grid.clone(),
            dim,
            states: out.states,
            paths,
        }
    }

    pub fn particles(&self) -> usize {
        self.states[0].len() / self.dim.max(1)
    }

    pub fn state(&self, k: usize, i: usize) -> &[f64] {
        &self.states[k][i * self.dim..(i + 1) * self.dim]
    }

    pub fn cloud(&self, k: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::from_finite(self.dim, self.states[k].clone())
    }

    pub fn final_cloud(&self) -> EmpiricalMeasure {
        self.cloud(self.states.len() - 1)
    }

    pub fn flow(&self) -> MeasureFlow {
        let clouds = (0..self.states.len()).map(|k| self.cloud(k)).collect();
        MeasureFlow::new(self.grid.times().to_vec(), clouds).expect("finite states")
    }
}

fn check_ensemble(coeffs: &dyn Coefficients, levy: &LevyModel, ens: &Ensemble) -> Result<()> {
    if ens.is_empty() {
        return Err(Error::Config("need at least one particle".into()));
    }
    if levy.dim() != coeffs.dim() {
        return Err(Error::DimensionMismatch {
            left: levy.dim(),
            right: coeffs.dim(),
        });
    }
    if ens.streams.len() != ens.x0.len() {
        return Err(Error::SizeMismatch {
            left: ens.x0.len(),
            right: ens.streams.len(),
        });
    }
    Ok(())
}

/// Solves the SDE with the measure argument frozen to `flow`.
pub fn integrate_decoupled(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    flow: &MeasureFlow,
    x0: &[f64],
    stream: &NoiseStream,
    grid: &TimeGrid,
) -> Result<PathSolution> {
    integrate_inner(coeffs, levy, flow, x0, stream, grid, None)
}

/// As [`integrate_decoupled`] with a prescribed list of big jumps in place of
/// the sampled ones.
pub fn integrate_decoupled_with_big_jumps(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    flow: &MeasureFlow,
    x0: &[f64],
    stream: &NoiseStream,
    grid: &TimeGrid,
    big: Vec<JumpEvent>,
) -> Result<PathSolution> {
    let mut big = big;
    big.retain(|e| e.time >= 0.0 && e.time <= grid.horizon());
    big.sort_by(|a, b| a.time.total_cmp(&b.time));
    integrate_inner(coeffs, levy, flow, x0, stream, grid, Some(big))
}

fn integrate_inner(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    flow: &MeasureFlow,
    x0: &[f64],
    stream: &NoiseStream,
    grid: &TimeGrid,
    big: Option<Vec<JumpEvent>>,
) -> Result<PathSolution> {
    let ens = Ensemble {
        x0: vec![x0.to_vec()],
        streams: vec![*stream],
    };
    check_ensemble(coeffs, levy, &ens)?;
    let dy = Dynamics::new(coeffs, levy);
    let forced = big.map(|b| vec![b]);
    let out = run_with_events(
        &dy,
        &ens.x0,
        &ens.streams,
        grid,
        MeasureSource::Frozen(flow),
        true,
        Exec::Sequential,
        forced.as_deref(),
    )?;
    let log = out
        .logs
        .and_then(|mut l| l.pop())
        .expect("one recorded path");
    Ok(PathSolution::from_log(grid, coeffs.dim(), log))
}

/// Many decoupled paths against the same frozen flow.
pub fn simulate_decoupled(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    flow: &MeasureFlow,
    ens: &Ensemble,
    grid: &TimeGrid,
    record: bool,
    exec: Exec,
) -> Result<ParticleRun> {
    check_ensemble(coeffs, levy, ens)?;
    let dy = Dynamics::new(coeffs, levy);
    let out = run(
        &dy,
        &ens.x0,
        &ens.streams,
        grid,
        MeasureSource::Frozen(flow),
        record,
        exec,
    )?;
    Ok(ParticleRun::from_engine(grid, coeffs.dim(), out))
}

/// The mean-field interacting system: every particle sees the empirical
/// cloud of all particles at the start of each base step.
pub fn simulate_particle_system(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    ens: &Ensemble,
    grid: &TimeGrid,
    record: bool,
    exec: Exec,
) -> Result<ParticleRun> {
    check_ensemble(coeffs, levy, ens)?;
    let dy = Dynamics::new(coeffs, levy);
    let out = run(
        &dy,
        &ens.x0,
        &ens.streams,
        grid,
        MeasureSource::Interacting,
        record,
        exec,
    )?;
    Ok(ParticleRun::from_engine(grid, coeffs.dim(), out))
}

/// Interacting particles paired with limit copies driven by the same noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub interacting: ParticleRun,
    pub limit: ParticleRun,
}

impl CoupledRun {
    /// `|X^{i,n}_t - X^i_t|` per base time and particle.
    pub fn errors(&self) -> Vec<Vec<f64>> {
        let n = self.interacting.particles();
        (0..self.interacting.states.len())
            .map(|k| {
                (0..n)
                    .map(|i| dist(self.interacting.state(k, i), self.limit.state(k, i)))
                    .collect()
            })
            .collect()
    }

    /// `sup_t |X^{i,n}_t - X^i_t|` over the base grid, per particle.
    pub fn sup_errors(&self) -> Vec<f64> {
        let n = self.interacting.particles();
        let mut sup = vec![0.0f64; n];
        for row in self.errors() {
            for (s, e) in sup.iter_mut().zip(row) {
                *s = s.max(e);
            }
        }
        sup
    }
}

pub fn simulate_coupled(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    ens: &Ensemble,
    grid: &TimeGrid,
    reference: &MeasureFlow,
    exec: Exec,
) -> Result<CoupledRun> {
    let interacting = simulate_particle_system(coeffs, levy, ens, grid, false, exec)?;
    let limit = simulate_decoupled(coeffs, levy, reference, ens, grid, false, exec)?;
    Ok(CoupledRun { interacting, limit })
}

/// Result of a converged Picard iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub flow: MeasureFlow,
    /// `trace[k-1]` is the distance between iterates `k` and `k-1`.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Picard streams for iteration `k` (starting at 1).
pub fn picard_streams(cfg: &SolverConfig, iteration: usize) -> Vec<NoiseStream> {
    let replica = if cfg.common_random_numbers {
        0
    } else {
        iteration as u64
    };
    Ensemble::streams(cfg.paths, cfg.seed, cfg.experiment, replica)
}

/// Initial draws used by every Picard iteration.
pub fn picard_initial(initial: &dyn InitialLaw, cfg: &SolverConfig) -> Vec<Vec<f64>> {
    Ensemble::draw(initial, cfg.paths, cfg.seed, cfg.experiment, 0).x0
}

/// Picard iteration `μ ↦ Law(X^μ)` from the constant-in-time initial cloud.
pub fn picard_fixed_point(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    levy: &LevyModel,
    grid: &TimeGrid,
    cfg: &SolverConfig,
) -> Result<PicardOutcome> {
    cfg.validate()?;
    let x0 = picard_initial(initial, cfg);
    let cloud = EmpiricalMeasure::new(coeffs.dim(), x0.concat())?;
    let start = MeasureFlow::constant(grid.times().to_vec(), cloud)?;
    picard_from_flow(coeffs, levy, grid, cfg, &x0, start)
}

/// Picard iteration from an arbitrary starting flow on `grid`.
pub fn picard_from_flow(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    grid: &TimeGrid,
    cfg: &SolverConfig,
    x0: &[Vec<f64>],
    start: MeasureFlow,
) -> Result<PicardOutcome> {
    cfg.validate()?;
    if x0.len() != cfg.paths {
        return Err(Error::SizeMismatch {
            left: x0.len(),
            right: cfg.paths,
        });
    }
    if start.times() != grid.times() {
        return Err(Error::GridMismatch);
    }
    let dy = Dynamics::new(coeffs, levy);
    let beta = coeffs.beta();
    let mut current = start;
    let mut trace = Vec::new();
    for k in 1..=cfg.max_iterations {
        let streams = picard_streams(cfg, k);
        let out = run(
            &dy,
            x0,
            &streams,
            grid,
            MeasureSource::Frozen(&current),
            false,
            cfg.exec,
        )?;
        let next = out.flow(grid, coeffs.dim());
        let d = flow_distance(&next, &current, beta, cfg.gamma)?;
        trace.push(d);
        current = next;
        if d < cfg.tolerance {
            return Ok(PicardOutcome {
                flow: current,
                trace,
                iterations: k,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        last: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}
