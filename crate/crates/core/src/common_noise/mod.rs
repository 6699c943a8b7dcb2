//! Systems with an additional common jump layer shared by all particles.
//!
//! One realization of the common layer is a [`CommonPath`]. Conditional laws
//! given the common history are represented by the cloud of particles driven
//! by the same common path; `k` common paths times `m` particles give the
//! nested Monte Carlo surrogate.

use serde::{Deserialize, Serialize};

use crate::chaos::{phi_rate, weak_points, PoCConfig, RateReport, WeakTerms};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::levy::LevyModel;
use crate::model::coeffs::Coefficients;
use crate::model::initial::InitialLaw;
use crate::model::measure::{EmpiricalMeasure, MeasureFlow};
use crate::solver::engine::{run, Dynamics, MeasureSource};
use crate::solver::{
    picard_initial, picard_streams, CommonPath, Ensemble, ParticleRun, SolverConfig, TimeGrid,
};
use crate::stream::{tag, Layer, NoiseStream, StreamId};
use crate::wasserstein::{conditional_flow_distance, flow_distance};

/// Idiosyncratic and common jump layers.
#[derive(Debug, Clone)]
pub struct TwoLayerNoise {
    pub idiosyncratic: LevyModel,
    pub common: LevyModel,
}

impl TwoLayerNoise {
    pub fn new(idiosyncratic: LevyModel, common: LevyModel) -> Result<Self> {
        if idiosyncratic.dim() != common.dim() {
            return Err(Error::DimensionMismatch {
                left: idiosyncratic.dim(),
                right: common.dim(),
            });
        }
        Ok(Self {
            idiosyncratic,
            common,
        })
    }

    /// Stream of the `j`-th common realization. It does not depend on any
    /// experiment id, so every experiment with the same seed sees the same
    /// common paths.
    pub fn common_stream(seed: u64, j: usize) -> NoiseStream {
        NoiseStream::new(
            seed,
            StreamId::new(tag("common-path"), j as u64, 0, Layer::CommonSmallJumps),
        )
    }

    pub fn common_path(&self, seed: u64, j: usize, horizon: f64) -> Result<CommonPath> {
        CommonPath::sample(&Self::common_stream(seed, j), &self.common, horizon)
    }

    fn dynamics<'a>(&'a self, coeffs: &'a dyn Coefficients, path: &'a CommonPath) -> Dynamics<'a> {
        Dynamics::new(coeffs, &self.idiosyncratic).with_common(&self.common, path)
    }
}

/// Members of one conditional law: the particles sharing common path `path`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCloud {
    pub path: usize,
    pub cloud: EmpiricalMeasure,
}

/// All particles of every common path as one cloud.
pub fn pool(clouds: &[ConditionalCloud]) -> Result<EmpiricalMeasure> {
    let dim = clouds
        .first()
        .map(|c| c.cloud.dim())
        .ok_or_else(|| Error::Config("nothing to pool".into()))?;
    let points: Vec<f64> = clouds
        .iter()
        .flat_map(|c| c.cloud.points().iter().copied())
        .collect();
    EmpiricalMeasure::new(dim, points)
}

fn check(coeffs: &dyn Coefficients, noise: &TwoLayerNoise) -> Result<()> {
    if coeffs.dim() != noise.idiosyncratic.dim() {
        return Err(Error::DimensionMismatch {
            left: coeffs.dim(),
            right: noise.idiosyncratic.dim(),
        });
    }
    if coeffs.small_jump_depends_on_measure() {
        return Err(Error::Config(
            "common-noise systems need a measure-free small-jump coefficient".into(),
        ));
    }
    Ok(())
}

/// Interacting particles sharing one common path.
pub fn simulate_common_system(
    coeffs: &dyn Coefficients,
    noise: &TwoLayerNoise,
    common: &CommonPath,
    ens: &Ensemble,
    grid: &TimeGrid,
    record: bool,
    exec: Exec,
) -> Result<ParticleRun> {
    check(coeffs, noise)?;
    if ens.is_empty() {
        return Err(Error::Config("need at least one particle".into()));
    }
    let dy = noise.dynamics(coeffs, common);
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

/// Decoupled particles against a frozen conditional flow, sharing one common path.
pub fn simulate_common_decoupled(
    coeffs: &dyn Coefficients,
    noise: &TwoLayerNoise,
    common: &CommonPath,
    flow: &MeasureFlow,
    ens: &Ensemble,
    grid: &TimeGrid,
    exec: Exec,
) -> Result<ParticleRun> {
    check(coeffs, noise)?;
    let dy = noise.dynamics(coeffs, common);
    let out = run(
        &dy,
        &ens.x0,
        &ens.streams,
        grid,
        MeasureSource::Frozen(flow),
        false,
        exec,
    )?;
    Ok(ParticleRun::from_engine(grid, coeffs.dim(), out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPicardOutcome {
    pub paths: Vec<CommonPath>,
    /// Converged flow per common path.
    pub flows: Vec<MeasureFlow>,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

impl ConditionalPicardOutcome {
    pub fn clouds_at(&self, k: usize) -> Vec<ConditionalCloud> {
        self.flows
            .iter()
            .enumerate()
            .map(|(j, f)| ConditionalCloud {
                path: j,
                cloud: f.cloud(k).clone(),
            })
            .collect()
    }
}

/// Picard iteration of the conditional law map over `k` common paths with
/// `cfg.paths` particles each. Initial draws and idiosyncratic streams are
/// indexed by particle only, so they are shared across common paths.
pub fn conditional_picard(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    noise: &TwoLayerNoise,
    grid: &TimeGrid,
    cfg: &SolverConfig,
    k: usize,
) -> Result<ConditionalPicardOutcome> {
    cfg.validate()?;
    check(coeffs, noise)?;
    if k == 0 {
        return Err(Error::Config("need at least one common path".into()));
    }
    let paths = (0..k)
        .map(|j| noise.common_path(cfg.seed, j, grid.horizon()))
        .collect::<Result<Vec<_>>>()?;
    let x0 = picard_initial(initial, cfg);
    let cloud = EmpiricalMeasure::new(coeffs.dim(), x0.concat())?;
    let start = MeasureFlow::constant(grid.times().to_vec(), cloud)?;
    let beta = coeffs.beta();
    // A silent common layer makes every path identical; iterate one of them.
    let silent = noise.common.is_silent();
    let active = if silent { 1 } else { k };
    let mut flows = vec![start; active];
    let mut trace = Vec::new();
    for it in 1..=cfg.max_iterations {
        let streams = picard_streams(cfg, it);
        let next = cfg.exec.try_map(active, |j| -> Result<MeasureFlow> {
            let dy = noise.dynamics(coeffs, &paths[j]);
            let out = run(
                &dy,
                &x0,
                &streams,
                grid,
                MeasureSource::Frozen(&flows[j]),
                false,
                if active == 1 {
                    cfg.exec
                } else {
                    Exec::Sequential
                },
            )?;
            Ok(out.flow(grid, coeffs.dim()))
        })?;
        let d = if silent {
            flow_distance(&next[0], &flows[0], beta, cfg.gamma)?
        } else {
            conditional_flow_distance(&next, &flows, beta, cfg.gamma)?
        };
        trace.push(d);
        flows = next;
        if d < cfg.tolerance {
            if silent {
                flows = vec![flows[0].clone(); k];
            }
            return Ok(ConditionalPicardOutcome {
                paths,
                flows,
                trace,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        last: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}

/// Conditional propagation of chaos. Replication `q` uses common path
/// `q mod k`; the interacting particles and their limit copies share both the
/// idiosyncratic streams and that common path.
pub fn run_conditional_poc(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    noise: &TwoLayerNoise,
    cfg: &PoCConfig,
    k: usize,
) -> Result<RateReport> {
    cfg.validate(coeffs.beta())?;
    let grid = cfg.grid()?;
    let reference = conditional_picard(coeffs, initial, noise, &grid, &cfg.reference_solver(), k)?;
    let path = |q: usize| q % k;
    let points = weak_points(
        cfg,
        initial,
        WeakTerms::Both,
        |q, ens| {
            simulate_common_system(
                coeffs,
                noise,
                &reference.paths[path(q)],
                ens,
                &grid,
                false,
                Exec::Sequential,
            )
        },
        |q, ens| {
            let j = path(q);
            simulate_common_decoupled(
                coeffs,
                noise,
                &reference.paths[j],
                &reference.flows[j],
                ens,
                &grid,
                Exec::Sequential,
            )
        },
    )?;
    let theoretical = phi_rate(cfg.p, coeffs.beta(), coeffs.dim())?;
    RateReport::assemble(
        "conditional_poc",
        cfg,
        coeffs.beta(),
        coeffs.dim(),
        points,
        theoretical,
        reference.trace,
    )
}

/// Summary of conditional means across common paths at one grid index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSpread {
    /// First coordinate of each conditional mean.
    pub means: Vec<f64>,
    /// Sample SD of those means.
    pub spread: f64,
    /// Average within-path SE of the conditional means.
    pub within_se: f64,
}

pub fn conditional_spread(clouds: &[ConditionalCloud]) -> ConditionalSpread {
    let means: Vec<f64> = clouds.iter().map(|c| c.cloud.mean()[0]).collect();
    let (_, se_of_mean) = crate::numeric::mean_and_se(&means);
    let spread = se_of_mean * (means.len() as f64).sqrt();
    let within_se = clouds
        .iter()
        .map(|c| {
            let xs: Vec<f64> = c.cloud.iter().map(|x| x[0]).collect();
            crate::numeric::mean_and_se(&xs).1
        })
        .sum::<f64>()
        / clouds.len().max(1) as f64;
    ConditionalSpread {
        means,
        spread,
        within_se,
    }
}
